//! Acceptance run: one PASS/FAIL line per criterion, every tolerance pinned
//! here. Exits nonzero when any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use ppd_cli::run::{run_file, RunOptions};
use ppd_core::design::{power_glm, power_glm_approx, power_two_group, A0Mode, Execution, GlmSimulation};
use ppd_core::glm::McmcSettings;
use ppd_core::model::{DesignSpec, GlmData, HistoricalSet, PriorSpec, SamplingPrior, TwoGroupSummary};
use ppd_core::normconst::{pwk_log_c, DEFAULT_RINGS};
use ppd_core::two_group::{conjugate_posterior, fit_fixed_a0, fit_random_a0, ConjugatePosterior};
use ppd_core::{EndpointSpec, Family, RngStream};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde_json::Value;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn exec() -> Execution {
    Execution { workers: workers(), progress: false }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn noninferiority_history(a0: Option<f64>) -> Vec<HistoricalSet> {
    vec![
        HistoricalSet::summary(TwoGroupSummary::new(44.0, 535), a0),
        HistoricalSet::summary(TwoGroupSummary::new(33.0, 304), a0),
    ]
}

fn vague_prior() -> PriorSpec {
    PriorSpec { mu_t_shape1: 1e-4, mu_t_shape2: 1e-4, mu_c_shape1: 1e-4, mu_c_shape2: 1e-4, ..PriorSpec::default() }
}

fn noninferiority_design(n_t: u64, n_trials: usize, n_mc: usize) -> DesignSpec {
    DesignSpec {
        delta: 0.041,
        gamma: 0.95,
        n_trials,
        n_t: Some(n_t),
        n_c: Some(n_t / 3),
        n_mc,
        n_bi: 250,
        ..DesignSpec::default()
    }
}

/// Power (true rates equal) and type I error (treatment at the margin).
fn noninferiority_rates(mode: A0Mode, n_t: u64, n_trials: usize, n_mc: usize, seed: u64) -> (f64, f64) {
    let endpoint = EndpointSpec::canonical(Family::Bernoulli);
    let design = noninferiority_design(n_t, n_trials, n_mc);
    let historical = noninferiority_history(if mode == A0Mode::Fixed { Some(0.3) } else { None });
    let prior = vague_prior();
    let control = SamplingPrior::point(0.092);
    let run = |mu_t: f64, id: u64| {
        power_two_group(
            &endpoint,
            &design,
            &historical,
            &prior,
            &SamplingPrior::point(mu_t),
            &control,
            mode,
            &[],
            &RngStream::new(seed, id),
            &exec(),
        )
        .unwrap()
        .estimate
    };
    (run(0.092, 1), run(0.092 + 0.041, 2))
}

fn criterion_1() -> Outcome {
    const POWER_TOL: f64 = 0.02;
    const TYPE_I_TOL: f64 = 0.01;
    let sizes = [750u64, 810, 900, 960, 1110];
    let power_ref = [0.843, 0.858, 0.889, 0.898, 0.924];
    let type_i_ref = [0.030, 0.027, 0.032, 0.030, 0.032];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &n_t) in sizes.iter().enumerate() {
        let (power, type_i) = noninferiority_rates(A0Mode::Fixed, n_t, 10_000, 10_000, 100 + i as u64);
        pass &= (power - power_ref[i]).abs() <= POWER_TOL && (type_i - type_i_ref[i]).abs() <= TYPE_I_TOL;
        parts.push(format!("n_t={n_t}: power {power:.4} (ref {}), type I {type_i:.4} (ref {})", power_ref[i], type_i_ref[i]));
    }
    Outcome { pass, detail: format!("{}; tol power {POWER_TOL}, type I {TYPE_I_TOL}", parts.join("; ")) }
}

fn criterion_2() -> Outcome {
    const POWER_TOL: f64 = 0.02;
    const TYPE_I_TOL: f64 = 0.012;
    let start = Instant::now();
    let (power, type_i) = noninferiority_rates(A0Mode::Random, 750, 10_000, 20_000, 200);
    Outcome {
        pass: (power - 0.864).abs() <= POWER_TOL && (type_i - 0.032).abs() <= TYPE_I_TOL,
        detail: format!(
            "N=10000, nMC=20000: power {power:.4} (ref 0.864 +/- {POWER_TOL}), type I {type_i:.4} (ref 0.032 +/- {TYPE_I_TOL}); {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    }
}

/// Closed-form control posterior, written out independently of the engine.
fn closed_form(family: Family, s1: f64, s2: f64, current: (f64, u64), hist: &[((f64, u64), f64)]) -> (f64, f64) {
    let parts = hist.iter().map(|&(d, a)| (d, a)).chain(std::iter::once((current, 1.0)));
    let (mut p, mut q) = (s1, s2);
    for ((y, n), a) in parts {
        let n = n as f64;
        match family {
            Family::Bernoulli => {
                p += a * y;
                q += a * (n - y);
            }
            Family::Poisson => {
                p += a * y;
                q += a * n;
            }
            Family::Exponential => {
                p += a * n;
                q += a * y;
            }
            _ => unreachable!(),
        }
    }
    match family {
        Family::Bernoulli => (p / (p + q), p * q / ((p + q).powi(2) * (p + q + 1.0))),
        _ => (p / q, p / (q * q)),
    }
}

fn same_params(a: &ConjugatePosterior, b: &ConjugatePosterior) -> bool {
    const REL: f64 = 1e-12;
    let close = |x: f64, y: f64| (x - y).abs() <= REL * x.abs().max(y.abs());
    match (a, b) {
        (ConjugatePosterior::Beta { shape1: a1, shape2: a2 }, ConjugatePosterior::Beta { shape1: b1, shape2: b2 }) => {
            close(*a1, *b1) && close(*a2, *b2)
        }
        (ConjugatePosterior::Gamma { shape: a1, rate: a2 }, ConjugatePosterior::Gamma { shape: b1, rate: b2 }) => {
            close(*a1, *b1) && close(*a2, *b2)
        }
        _ => false,
    }
}

fn draw_data<R: Rng>(family: Family, rng: &mut R) -> (f64, u64) {
    let n: u64 = rng.random_range(5..400);
    let y = match family {
        Family::Bernoulli => rng.random_range(0..=n) as f64,
        Family::Poisson => rng.random_range(0..3 * n) as f64,
        _ => n as f64 * rng.random_range(0.2..5.0),
    };
    (y, n)
}

fn criterion_3() -> Outcome {
    const SE_MULT: f64 = 3.0;
    let mut rng = RngStream::new(3, 0).rng();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut limit_failures = 0;
    for case in 0..30 {
        let family = [Family::Bernoulli, Family::Poisson, Family::Exponential][case % 3];
        let k = 1 + case % 3;
        let current = draw_data(family, &mut rng);
        let hist: Vec<((f64, u64), f64)> = (0..k).map(|_| (draw_data(family, &mut rng), rng.random_range(0.0..1.0))).collect();
        let (s1, s2) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let prior = PriorSpec { mu_c_shape1: s1, mu_c_shape2: s2, ..PriorSpec::default() };
        let endpoint = EndpointSpec::canonical(family);
        let cur = TwoGroupSummary::new(current.0, current.1);
        let sets: Vec<HistoricalSet> =
            hist.iter().map(|&((y, n), a)| HistoricalSet::summary(TwoGroupSummary::new(y, n), Some(a))).collect();
        let post = fit_fixed_a0(&endpoint, &cur, &sets, &prior, 20_250, 250, &mut rng).unwrap();
        let draws = &post.mu_c_draws;
        let m = draws.len() as f64;
        let (mu, var) = closed_form(family, s1, s2, current, &hist);
        let sample_mean = mean(draws);
        let centered: Vec<f64> = draws.iter().map(|x| x - sample_mean).collect();
        let sample_var = centered.iter().map(|d| d * d).sum::<f64>() / (m - 1.0);
        let m4 = centered.iter().map(|d| d.powi(4)).sum::<f64>() / m;
        let z_mean = (sample_mean - mu).abs() / (sample_var / m).sqrt();
        let z_var = (sample_var - var).abs() / ((m4 - sample_var * sample_var) / m).sqrt();
        worst = worst.max(z_mean).max(z_var);
        if z_mean > SE_MULT || z_var > SE_MULT {
            failures.push(format!("case {case} ({family:?}): z mean {z_mean:.2}, z var {z_var:.2}"));
        }

        // Limits at the parameter level: a0 = 0 drops history, a0 = 1 pools it.
        let hist_sets: Vec<TwoGroupSummary> = hist.iter().map(|&((y, n), _)| TwoGroupSummary::new(y, n)).collect();
        let prior_c = prior.control_prior(family);
        let zero = conjugate_posterior(family, prior_c, Some(&cur), hist_sets.iter().map(|s| (s, 0.0))).unwrap();
        let alone = conjugate_posterior(family, prior_c, Some(&cur), std::iter::empty()).unwrap();
        let one = conjugate_posterior(family, prior_c, Some(&cur), hist_sets.iter().map(|s| (s, 1.0))).unwrap();
        let pooled_y = current.0 + hist_sets.iter().map(|s| s.y_sum).sum::<f64>();
        let pooled_n = current.1 + hist_sets.iter().map(|s| s.n).sum::<u64>();
        let pooled = conjugate_posterior(family, prior_c, Some(&TwoGroupSummary::new(pooled_y, pooled_n)), std::iter::empty()).unwrap();
        if !same_params(&zero, &alone) || !same_params(&one, &pooled) {
            limit_failures += 1;
        }
    }
    Outcome {
        pass: failures.is_empty() && limit_failures == 0,
        detail: format!(
            "30 cases, worst |z| {worst:.2} (limit {SE_MULT}); a0 limit identity failures {limit_failures} (rel 1e-12){}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

fn criterion_4() -> Outcome {
    const TOL_1D: f64 = 0.05;
    const TOL_3D: f64 = 0.1;
    const TOL_BERN: f64 = 0.05;
    let gaussian = |dim: usize| -> f64 {
        let est: Vec<f64> = (0..10)
            .map(|seed| {
                let mut rng = RngStream::new(seed, 40 + dim as u64).rng();
                let draws = DMatrix::from_fn(20_000, dim, |_, _| StandardNormal.sample(&mut rng));
                pwk_log_c(&draws, |x| -0.5 * x.iter().map(|v| v * v).sum::<f64>(), DEFAULT_RINGS).unwrap()
            })
            .collect();
        (median(est) - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln()).abs()
    };
    let e1 = gaussian(1);
    let e3 = gaussian(3);
    let mut worst_bern: f64 = 0.0;
    for a0 in [0.1, 0.3, 0.5, 0.7, 1.0] {
        let (s, f) = (a0 * 44.0, a0 * 491.0);
        let est: Vec<f64> = (0..10)
            .map(|seed| {
                let mut rng = RngStream::new(seed, 47).rng();
                let beta = Beta::new(s + 1.0, f + 1.0).unwrap();
                let draws = DMatrix::from_fn(20_000, 1, |_, _| beta.sample(&mut rng));
                let kernel = |x: &[f64]| {
                    let p = x[0];
                    if p > 0.0 && p < 1.0 { s * p.ln() + f * (-p).ln_1p() } else { f64::NEG_INFINITY }
                };
                pwk_log_c(&draws, kernel, DEFAULT_RINGS).unwrap()
            })
            .collect();
        worst_bern = worst_bern.max((median(est) - ln_beta(s + 1.0, f + 1.0)).abs());
    }
    Outcome {
        pass: e1 <= TOL_1D && e3 <= TOL_3D && worst_bern <= TOL_BERN,
        detail: format!(
            "median |error| over 10 seeds: 1-D {e1:.4} (tol {TOL_1D}), 3-D {e3:.4} (tol {TOL_3D}), Bernoulli worst over a0 {worst_bern:.4} (tol {TOL_BERN})"
        ),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn quiet(workers: usize) -> RunOptions {
    RunOptions { workers: Some(workers), quiet: true, ..Default::default() }
}

fn criterion_5() -> Outcome {
    const TOL: f64 = 0.1;
    const R2: f64 = 0.99;
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("y\n");
    for i in 0..535 {
        csv.push_str(if i < 44 { "1\n" } else { "0\n" });
    }
    write(dir.path(), "hist.csv", &csv);
    let config = write(
        dir.path(),
        "nc.toml",
        "command = \"normconst\"\nseed = 5\n[model]\nkind = \"glm\"\nfamily = \"bernoulli\"\na0_mode = \"random\"\n[[historical]]\ncsv = \"hist.csv\"\n",
    );
    let r = run_file(&config, None, &quiet(workers())).unwrap().results;
    let r2 = r["r_squared"].as_f64().unwrap();
    let mut worst: f64 = 0.0;
    let grid = r["grid"].as_array().unwrap();
    for row in grid {
        let a = row["a0"][0].as_f64().unwrap();
        worst = worst.max((row["fitted"].as_f64().unwrap() - ln_beta(44.0 * a, 491.0 * a)).abs());
    }
    Outcome {
        pass: worst <= TOL && r2 > R2,
        detail: format!(
            "{} grid points, degree {}, max |f - ln B(44a, 491a)| {worst:.4} (tol {TOL}), R^2 {r2:.6} (> {R2})",
            grid.len(),
            r["degree"]
        ),
    }
}

/// Family, current (y, n), historical (y, n), mean-prior shapes, a0-prior shapes.
type GridCase = (Family, (f64, u64), (f64, u64), (f64, f64), (f64, f64));

/// Posterior means of (mu, a0) from a dense midpoint grid.
fn grid_oracle(family: Family, current: (f64, u64), hist: (f64, u64), shapes: (f64, f64), a0_shapes: (f64, f64)) -> (f64, f64) {
    const N_MU: usize = 2000;
    const N_A: usize = 400;
    let (y, n) = (current.0, current.1 as f64);
    let (y0, n0) = (hist.0, hist.1 as f64);
    let (s1, s2) = shapes;
    // The current likelihood bounds where the posterior can sit.
    let (centre, sd) = match family {
        Family::Bernoulli => {
            let (p, q) = (y + 1.0, n - y + 1.0);
            (p / (p + q), (p * q / ((p + q).powi(2) * (p + q + 1.0))).sqrt())
        }
        _ => ((y + 1.0) / n, (y + 1.0).sqrt() / n),
    };
    let hi_cap = if family == Family::Bernoulli { 1.0 - 1e-12 } else { f64::INFINITY };
    let lo = (centre - 12.0 * sd).max(1e-12);
    let hi = (centre + 12.0 * sd).min(hi_cap);
    let h = (hi - lo) / N_MU as f64;
    let mut logw = Vec::with_capacity(N_MU * N_A);
    let mut cells = Vec::with_capacity(N_MU * N_A);
    for i in 0..N_A {
        let a = (i as f64 + 0.5) / N_A as f64;
        let ln_pa = (a0_shapes.0 - 1.0) * a.ln() + (a0_shapes.1 - 1.0) * (-a).ln_1p();
        for j in 0..N_MU {
            let mu = lo + (j as f64 + 0.5) * h;
            let lp = match family {
                Family::Bernoulli => {
                    let (p, q) = (a * y0 + s1, a * (n0 - y0) + s2);
                    (p - 1.0) * mu.ln() + (q - 1.0) * (-mu).ln_1p() - ln_beta(p, q) + y * mu.ln() + (n - y) * (-mu).ln_1p()
                }
                _ => {
                    let (shape, rate) = (a * y0 + s1, a * n0 + s2);
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * mu.ln() - rate * mu + y * mu.ln() - n * mu
                }
            };
            logw.push(ln_pa + lp);
            cells.push((mu, a));
        }
    }
    let z = log_sum_exp(&logw);
    cells.iter().zip(&logw).fold((0.0, 0.0), |acc, (&(mu, a), &lw)| {
        let w = (lw - z).exp();
        (acc.0 + w * mu, acc.1 + w * a)
    })
}

fn criterion_6() -> Outcome {
    const TOL: f64 = 0.03;
    let cases: [GridCase; 5] = [
        (Family::Bernoulli, (20.0, 200), (44.0, 535), (1.0, 1.0), (1.0, 1.0)),
        (Family::Bernoulli, (45.0, 150), (30.0, 300), (1.0, 1.0), (1.0, 1.0)),
        (Family::Bernoulli, (12.0, 60), (40.0, 100), (0.5, 0.5), (2.0, 2.0)),
        (Family::Bernoulli, (90.0, 400), (22.0, 100), (1.0, 1.0), (1.0, 3.0)),
        (Family::Poisson, (130.0, 50), (260.0, 80), (1.0, 1.0), (1.0, 1.0)),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (seed, &(family, current, hist, shapes, a0_shapes)) in cases.iter().enumerate() {
        let (mu_ref, a_ref) = grid_oracle(family, current, hist, shapes, a0_shapes);
        let prior = PriorSpec {
            mu_c_shape1: shapes.0,
            mu_c_shape2: shapes.1,
            a0_shape1: a0_shapes.0,
            a0_shape2: a0_shapes.1,
            ..PriorSpec::default()
        };
        let mut rng = RngStream::new(600 + seed as u64, 0).rng();
        let post = fit_random_a0(
            &EndpointSpec::canonical(family),
            &TwoGroupSummary::new(current.0, current.1),
            &[HistoricalSet::summary(TwoGroupSummary::new(hist.0, hist.1), None)],
            &prior,
            &[],
            20_000,
            250,
            &mut rng,
        )
        .unwrap();
        let mu = mean(&post.mu_c_draws);
        let a0 = post.a0_draws.unwrap().column(0).mean();
        let err = (mu - mu_ref).abs().max((a0 - a_ref).abs());
        worst = worst.max(err);
        parts.push(format!("mu {mu:.4}/{mu_ref:.4}, a0 {a0:.4}/{a_ref:.4}"));
    }
    Outcome { pass: worst <= TOL, detail: format!("max error {worst:.4} (tol {TOL}); sampler/oracle: {}", parts.join("; ")) }
}

fn criterion_7() -> Outcome {
    const TOL: f64 = 0.05;
    const SPEEDUP: f64 = 10.0;
    const TRIALS: usize = 200;
    const N_MC: usize = 1000;
    const N_BI: usize = 200;
    let mut rng = RngStream::new(7, 0).rng();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let hist_beta = [-1.0, 0.5, -0.3, 0.2];
    let rows = 400;
    let x = DMatrix::from_fn(rows, 3, |_, _| normal());
    let mut rng = RngStream::new(7, 1).rng();
    let y: Vec<f64> = (0..rows)
        .map(|i| {
            let eta = hist_beta[0] + (0..3).map(|j| hist_beta[j + 1] * x[(i, j)]).sum::<f64>();
            f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())))
        })
        .collect();
    let historical = vec![HistoricalSet::glm(GlmData::new(y, x), Some(0.5))];
    // Treatment effects from N(-0.5, 0.5^2) truncated to [-2, -0.1].
    let mut rng = RngStream::new(7, 2).rng();
    let mut atoms = Vec::new();
    while atoms.len() < 100 {
        let z: f64 = StandardNormal.sample(&mut rng);
        let b = -0.5 + 0.5 * z;
        if (-2.0..=-0.1).contains(&b) {
            atoms.push(vec![-1.0, b, 0.5, -0.3, 0.2]);
        }
    }
    let samp = SamplingPrior::from_rows(&atoms);
    let endpoint = EndpointSpec::canonical(Family::Bernoulli);
    let sim = GlmSimulation::default();
    let settings = McmcSettings::new(N_MC, N_BI);
    let mut worst: f64 = 0.0;
    let (mut t_mcmc, mut t_approx) = (0.0, 0.0);
    let mut parts = Vec::new();
    for (i, size) in [800usize, 1000, 1200].into_iter().enumerate() {
        let design = DesignSpec {
            delta: 0.0,
            gamma: 0.95,
            n_trials: TRIALS,
            data_size: Some(size),
            n_mc: N_MC,
            n_bi: N_BI,
            ..DesignSpec::default()
        };
        // Both methods see the same simulated trials.
        let stream = RngStream::new(70 + i as u64, 0);
        let start = Instant::now();
        let mcmc = power_glm(&endpoint, &design, &historical, &PriorSpec::default(), &samp, &sim, A0Mode::Fixed, None, &settings, &stream, &exec())
            .unwrap()
            .estimate;
        t_mcmc += start.elapsed().as_secs_f64();
        let start = Instant::now();
        let approx = power_glm_approx(&endpoint, &design, &historical, &samp, &sim, &stream, &exec()).unwrap().estimate;
        t_approx += start.elapsed().as_secs_f64();
        worst = worst.max((mcmc - approx).abs());
        parts.push(format!("n={size}: MCMC {mcmc:.3}, approx {approx:.3}"));
    }
    let speedup = t_mcmc / t_approx;
    Outcome {
        pass: worst <= TOL && speedup >= SPEEDUP,
        detail: format!(
            "{}; max |diff| {worst:.3} (tol {TOL}); speedup {speedup:.0}x (>= {SPEEDUP}x); {TRIALS} trials per size, nMC {N_MC}",
            parts.join("; ")
        ),
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The shipped config with data paths made absolute and run-size overrides.
fn shipped(dir: &Path, name: &str, replacements: &[(&str, &str)]) -> PathBuf {
    let data = configs_dir().join("data");
    let mut text = std::fs::read_to_string(configs_dir().join(name)).unwrap();
    text = text.replace("\"data/", &format!("\"{}/", data.display()));
    for (from, to) in replacements {
        assert!(text.contains(from), "{name} lacks `{from}`");
        text = text.replace(from, to);
    }
    write(dir, name, &text)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        ("analyze", shipped(dir.path(), "logistic_analyze.toml", &[])),
        (
            "design",
            shipped(dir.path(), "two_group_random_design.toml", &[("n_trials = 2000", "n_trials = 200"), ("n_mc = 20000", "n_mc = 2000")]),
        ),
        ("normconst", shipped(dir.path(), "logistic_normconst.toml", &[("cache_dir = \"surfaces\"\n", "")])),
        ("find-n", shipped(dir.path(), "two_group_find_n.toml", &[("n_trials = 2000", "n_trials = 500")])),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (command, path) in &configs {
        let runs: Vec<(Value, String)> = [1, 4, 8]
            .iter()
            .map(|&w| {
                let r = run_file(path, None, &quiet(w)).unwrap();
                (r.results, r.fingerprint)
            })
            .collect();
        let same = runs.windows(2).all(|w| w[0] == w[1]);
        pass &= same;
        parts.push(format!("{command} {}", if same { "identical" } else { "DIFFERENT" }));
    }
    Outcome { pass, detail: format!("results and fingerprints for workers 1/4/8: {}", parts.join(", ")) }
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    // `cargo test -- <filter>` style arguments select criteria by number.
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("1", "fixed-a0 noninferiority power and type I error", criterion_1),
        ("2", "random-a0 noninferiority power and type I error", criterion_2),
        ("3", "conjugate posterior moments and a0 limits", criterion_3),
        ("4", "PWK log normalizing constants", criterion_4),
        ("5", "normalizing-constant surface fit", criterion_5),
        ("6", "random-a0 posterior vs dense-grid quadrature", criterion_6),
        ("7", "large-sample approximation vs MCMC power", criterion_7),
        ("8", "determinism across worker counts", criterion_8),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{}] {name}: {} ({:.1}s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
