//! Simulation-based operating characteristics (Bayesian power and type I
//! error) and the sample-size search.
//!
//! Every trial derives its random stream from the master stream and its
//! index, and results are collected in index order, so estimates do not
//! depend on the number of workers.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, ChiSquared, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{PpdError, Result};
use crate::glm::{fit_glm_random_a0, sample_fixed, weighted_mode, LogNormalizer, McmcSettings};
use crate::mcmc::{gamma_draw, SliceConfig};
use crate::model::{
    link_eval, DesignSpec, EndpointSpec, Family, GlmData, HistoricalSet, PriorSpec, SamplingPrior,
    TwoGroupSummary,
};
use crate::normconst::PolySurface;
use crate::rng::RngStream;
use crate::special::std_normal_cdf;
use crate::two_group::{
    conjugate_posterior, fit_fixed_a0, fit_random_a0, reject_probability, TwoGroupPosterior,
};

/// Share of trials that may be dropped for non-convergence before the
/// approximation is abandoned.
pub const MAX_EXCLUDED_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum A0Mode {
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristic {
    /// Rejection rate: power or type I error depending on the sampling prior.
    pub estimate: f64,
    pub mc_stderr: f64,
    pub rejections: usize,
    /// Trials that entered the estimate.
    pub trials: usize,
    /// Trials dropped because the approximation did not converge.
    #[serde(default)]
    pub excluded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_posterior_means: Option<Vec<f64>>,
}

impl OperatingCharacteristic {
    fn from_counts(rejections: usize, trials: usize, excluded: usize, means: Option<Vec<f64>>) -> Self {
        let estimate = if trials > 0 { rejections as f64 / trials as f64 } else { f64::NAN };
        let mc_stderr = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        Self { estimate, mc_stderr, rejections, trials, excluded, average_posterior_means: means }
    }
}

/// Worker count and progress reporting for a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Execution {
    pub workers: usize,
    pub progress: bool,
}

impl Default for Execution {
    fn default() -> Self {
        Self { workers: 1, progress: false }
    }
}

#[derive(Debug, Clone, Default)]
struct TrialOutcome {
    reject: bool,
    excluded: bool,
    means: Option<Vec<f64>>,
}

/// Runs `trial(b)` for b in 0..n on a pool of `exec.workers` threads,
/// returning outcomes in index order.
fn run_trials<F>(n: usize, exec: &Execution, label: &str, trial: F) -> Result<Vec<TrialOutcome>>
where
    F: Fn(usize) -> Result<TrialOutcome> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exec.workers.max(1))
        .build()
        .map_err(|e| PpdError::InvalidInput(format!("thread pool: {e}")))?;
    let done = AtomicUsize::new(0);
    let step = (n / 20).max(1);
    let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|b| {
                let out = trial(b);
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                if exec.progress && (finished.is_multiple_of(step) || finished == n) {
                    eprintln!("{label}: {finished}/{n} trials ({}%)", finished * 100 / n);
                }
                out
            })
            .collect()
    });
    outcomes.into_iter().collect()
}

fn summarize(outcomes: &[TrialOutcome]) -> OperatingCharacteristic {
    let kept: Vec<&TrialOutcome> = outcomes.iter().filter(|o| !o.excluded).collect();
    let rejections = kept.iter().filter(|o| o.reject).count();
    let means = kept.first().and_then(|o| o.means.as_ref()).map(|first| {
        let mut sum = vec![0.0; first.len()];
        for o in &kept {
            if let Some(m) = &o.means {
                for (s, v) in sum.iter_mut().zip(m) {
                    *s += v;
                }
            }
        }
        sum.iter().map(|s| s / kept.len() as f64).collect()
    });
    OperatingCharacteristic::from_counts(rejections, kept.len(), outcomes.len() - kept.len(), means)
}

fn pick_atom<R: Rng + ?Sized>(prior: &SamplingPrior, rng: &mut R) -> usize {
    rng.random_range(0..prior.atoms())
}

/// Simulated sufficient statistics for one arm with mean `mu`
/// (rate for exponential data) and variance `var` for normal data.
fn simulate_arm<R: Rng + ?Sized>(family: Family, mu: f64, var: Option<f64>, n: u64, rng: &mut R) -> Result<TwoGroupSummary> {
    let invalid = |what: &str| PpdError::InvalidInput(format!("sampling prior atom {mu} invalid for {what}"));
    Ok(match family {
        Family::Bernoulli | Family::Binomial => {
            if !(0.0..=1.0).contains(&mu) {
                return Err(invalid("binary data"));
            }
            let y = Binomial::new(n, mu).map_err(|_| invalid("binary data"))?.sample(rng);
            TwoGroupSummary::new(y as f64, n)
        }
        Family::Poisson => {
            if !(mu > 0.0) {
                return Err(invalid("count data"));
            }
            let y: f64 = Poisson::new(mu * n as f64).map_err(|_| invalid("count data"))?.sample(rng);
            TwoGroupSummary::new(y, n)
        }
        Family::Exponential => {
            if !(mu > 0.0) {
                return Err(invalid("exponential data"));
            }
            TwoGroupSummary::new(gamma_draw(n as f64, mu, rng)?, n)
        }
        Family::Normal => {
            let var = var.ok_or_else(|| PpdError::InvalidInput("normal sampling prior needs variances".into()))?;
            if n < 2 {
                return Err(PpdError::InvalidInput("normal arms need at least two subjects".into()));
            }
            let nf = n as f64;
            let ybar = Normal::new(mu, (var / nf).sqrt()).map_err(|e| PpdError::InvalidInput(e.to_string()))?.sample(rng);
            let chi: f64 = ChiSquared::new(nf - 1.0).map_err(|e| PpdError::InvalidInput(e.to_string()))?.sample(rng);
            TwoGroupSummary::normal(ybar * nf, n, var * chi / (nf - 1.0))
        }
    })
}

/// Two-group rejection rate under the given sampling priors.
#[allow(clippy::too_many_arguments)]
pub fn power_two_group(
    endpoint: &EndpointSpec,
    design: &DesignSpec,
    historical: &[HistoricalSet],
    prior: &PriorSpec,
    samp_t: &SamplingPrior,
    samp_c: &SamplingPrior,
    a0_mode: A0Mode,
    slice_cfgs: &[SliceConfig],
    stream: &RngStream,
    exec: &Execution,
) -> Result<OperatingCharacteristic> {
    let (n_t, n_c) = match (design.n_t, design.n_c) {
        (Some(t), Some(c)) => (t, c),
        _ => return Err(PpdError::InvalidInput("two-group designs need n_t and n_c".into())),
    };
    let needs_var = endpoint.family == Family::Normal;
    let mut violations = samp_t.violations("sampling_prior.mu_t", 1, needs_var);
    violations.extend(samp_c.violations("sampling_prior.mu_c", 1, needs_var));
    violations.extend(design.violations("design"));
    if !violations.is_empty() {
        return Err(PpdError::Validation(violations));
    }
    let trial = |b: usize| -> Result<TrialOutcome> {
        let trial_stream = stream.child(b as u64);
        let mut data_rng = trial_stream.child(0).rng();
        let mut fit_rng = trial_stream.child(1).rng();
        let it = pick_atom(samp_t, &mut data_rng);
        let ic = pick_atom(samp_c, &mut data_rng);
        let var = |p: &SamplingPrior, i: usize| p.variance_draws.as_ref().map(|v| v[i]);
        let treat = simulate_arm(endpoint.family, samp_t.draws[(it, 0)], var(samp_t, it), n_t, &mut data_rng)?;
        let control = simulate_arm(endpoint.family, samp_c.draws[(ic, 0)], var(samp_c, ic), n_c, &mut data_rng)?;
        let post = control_posterior(endpoint, &control, historical, prior, a0_mode, slice_cfgs, design, &mut fit_rng)?;
        let p = reject_probability(endpoint, &post, &treat, prior, design.delta)?;
        Ok(TrialOutcome { reject: p >= design.gamma, ..Default::default() })
    };
    let outcomes = run_trials(design.n_trials, exec, "design", trial)?;
    Ok(summarize(&outcomes))
}

#[allow(clippy::too_many_arguments)]
fn control_posterior<R: Rng + ?Sized>(
    endpoint: &EndpointSpec,
    control: &TwoGroupSummary,
    historical: &[HistoricalSet],
    prior: &PriorSpec,
    a0_mode: A0Mode,
    slice_cfgs: &[SliceConfig],
    design: &DesignSpec,
    rng: &mut R,
) -> Result<TwoGroupPosterior> {
    match a0_mode {
        A0Mode::Fixed if endpoint.family != Family::Normal => {
            // Closed form; no draws are needed for the quadrature.
            let weights = historical
                .iter()
                .map(|h| match (h.as_summary(), h.a0) {
                    (Some(s), Some(a)) => Ok((s, a)),
                    _ => Err(PpdError::InvalidInput("fixed a0 needs summary data with a0".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            let post = conjugate_posterior(endpoint.family, prior.control_prior(endpoint.family), Some(control), weights)?;
            Ok(TwoGroupPosterior { mu_c_draws: Vec::new(), tau_draws: None, a0_draws: None, conjugate: Some(post) })
        }
        A0Mode::Fixed => fit_fixed_a0(endpoint, control, historical, prior, design.n_mc, design.n_bi, rng),
        A0Mode::Random => fit_random_a0(endpoint, control, historical, prior, slice_cfgs, design.n_mc, design.n_bi, rng),
    }
}

/// Where simulated regression covariates come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateSource {
    /// Rows resampled from the stacked historical covariates.
    Historical,
    /// Rows resampled from a supplied matrix (no treatment column).
    Samples(DMatrix<f64>),
}

/// Data-generation settings for regression designs.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmSimulation {
    pub covariates: CovariateSource,
    /// Probability that a simulated subject is treated.
    pub allocation: f64,
}

impl Default for GlmSimulation {
    fn default() -> Self {
        Self { covariates: CovariateSource::Historical, allocation: 0.5 }
    }
}

fn covariate_pool(historical: &[HistoricalSet], source: &CovariateSource) -> Result<DMatrix<f64>> {
    match source {
        CovariateSource::Samples(x) => {
            if x.nrows() == 0 {
                return Err(PpdError::InvalidInput("covariate samples are empty".into()));
            }
            Ok(x.clone())
        }
        CovariateSource::Historical => {
            let parts: Vec<&GlmData> = historical.iter().filter_map(HistoricalSet::as_glm).collect();
            if parts.is_empty() {
                return Err(PpdError::InvalidInput(
                    "covariates must come from historical data or covariate samples".into(),
                ));
            }
            let p = parts[0].covariates();
            let rows: usize = parts.iter().map(|d| d.rows()).sum();
            let mut x = DMatrix::zeros(rows, p);
            let mut r = 0;
            for d in parts {
                x.rows_mut(r, d.rows()).copy_from(&d.x);
                r += d.rows();
            }
            Ok(x)
        }
    }
}

/// Simulates one current trial: resampled covariates, randomized treatment,
/// responses through the link.
fn simulate_glm<R: Rng + ?Sized>(
    endpoint: &EndpointSpec,
    pool: &DMatrix<f64>,
    beta: &[f64],
    variance: Option<f64>,
    size: usize,
    allocation: f64,
    rng: &mut R,
) -> Result<GlmData> {
    let p = pool.ncols();
    if beta.len() != p + 2 {
        return Err(PpdError::InvalidInput(format!(
            "sampling prior has {} coefficients, expected {}",
            beta.len(),
            p + 2
        )));
    }
    let mut x = DMatrix::zeros(size, p + 1);
    let mut y = Vec::with_capacity(size);
    for i in 0..size {
        let src = rng.random_range(0..pool.nrows());
        let treat = if rng.random::<f64>() < allocation { 1.0 } else { 0.0 };
        x[(i, 0)] = treat;
        let mut eta = beta[0] + beta[1] * treat;
        for j in 0..p {
            let v = pool[(src, j)];
            x[(i, j + 1)] = v;
            eta += beta[j + 2] * v;
        }
        let mean = link_eval(endpoint.link, eta)?;
        let value = match endpoint.family {
            Family::Bernoulli | Family::Binomial => {
                if rng.random::<f64>() < mean { 1.0 } else { 0.0 }
            }
            Family::Poisson => Poisson::new(mean)
                .map_err(|e| PpdError::InvalidInput(format!("poisson mean {mean}: {e}")))?
                .sample(rng),
            Family::Exponential => gamma_draw(1.0, mean, rng)?,
            Family::Normal => {
                let var = variance.ok_or_else(|| PpdError::InvalidInput("normal sampling prior needs variances".into()))?;
                Normal::new(mean, var.sqrt()).map_err(|e| PpdError::InvalidInput(e.to_string()))?.sample(rng)
            }
        };
        y.push(value);
    }
    Ok(GlmData::new(y, x))
}

fn glm_inputs<'a>(
    endpoint: &EndpointSpec,
    design: &DesignSpec,
    historical: &'a [HistoricalSet],
    samp_beta: &SamplingPrior,
    sim: &GlmSimulation,
) -> Result<(usize, DMatrix<f64>, Vec<&'a GlmData>)> {
    let size = design
        .data_size
        .ok_or_else(|| PpdError::InvalidInput("regression designs need data_size".into()))?;
    if !(sim.allocation > 0.0 && sim.allocation < 1.0) {
        return Err(PpdError::InvalidInput("allocation must lie in (0, 1)".into()));
    }
    let pool = covariate_pool(historical, &sim.covariates)?;
    let hist: Vec<&GlmData> = historical
        .iter()
        .enumerate()
        .map(|(k, h)| h.as_glm().ok_or_else(|| PpdError::InvalidInput(format!("historical[{k}] must be regression data"))))
        .collect::<Result<_>>()?;
    let mut violations = samp_beta.violations("sampling_prior.beta", pool.ncols() + 2, endpoint.family == Family::Normal);
    violations.extend(design.violations("design"));
    if !violations.is_empty() {
        return Err(PpdError::Validation(violations));
    }
    Ok((size, pool, hist))
}

/// Regression rejection rate: reject when `P(beta1 < delta | data) >= gamma`,
/// with the posterior probability estimated from MCMC draws.
#[allow(clippy::too_many_arguments)]
pub fn power_glm(
    endpoint: &EndpointSpec,
    design: &DesignSpec,
    historical: &[HistoricalSet],
    prior: &PriorSpec,
    samp_beta: &SamplingPrior,
    sim: &GlmSimulation,
    a0_mode: A0Mode,
    surface: Option<&PolySurface>,
    settings: &McmcSettings,
    stream: &RngStream,
    exec: &Execution,
) -> Result<OperatingCharacteristic> {
    let (size, pool, hist) = glm_inputs(endpoint, design, historical, samp_beta, sim)?;
    let normalizer = match (a0_mode, surface) {
        (A0Mode::Random, Some(s)) => Some(LogNormalizer::Surface(s)),
        (A0Mode::Random, None) if endpoint.family == Family::Normal => Some(LogNormalizer::NormalAnalytic),
        (A0Mode::Random, None) => {
            return Err(PpdError::Configuration(
                "random a0 for non-normal regression needs a normalizing-constant surface".into(),
            ))
        }
        (A0Mode::Fixed, _) => None,
    };
    let fixed: Vec<f64> = match a0_mode {
        A0Mode::Fixed => historical
            .iter()
            .enumerate()
            .map(|(k, h)| h.a0.ok_or_else(|| PpdError::InvalidInput(format!("historical[{k}] needs a fixed a0"))))
            .collect::<Result<_>>()?,
        A0Mode::Random => Vec::new(),
    };
    let settings = McmcSettings { n_mc: design.n_mc, n_bi: design.n_bi, ..settings.clone() };
    let trial = |b: usize| -> Result<TrialOutcome> {
        let trial_stream = stream.child(b as u64);
        let mut data_rng = trial_stream.child(0).rng();
        let mut fit_rng = trial_stream.child(1).rng();
        let atom = pick_atom(samp_beta, &mut data_rng);
        let beta: Vec<f64> = samp_beta.draws.row(atom).iter().copied().collect();
        let var = samp_beta.variance_draws.as_ref().map(|v| v[atom]);
        let current = simulate_glm(endpoint, &pool, &beta, var, size, sim.allocation, &mut data_rng)?;
        let post = match normalizer {
            None => sample_fixed(endpoint, Some(&current), &hist, &fixed, &settings, &mut fit_rng)?,
            Some(norm) => fit_glm_random_a0(endpoint, Some(&current), historical, prior, norm, &settings, &mut fit_rng)?,
        };
        let draws = post.beta_draws.column(1);
        let below = draws.iter().filter(|&&b1| b1 < design.delta).count();
        let p = below as f64 / draws.len() as f64;
        Ok(TrialOutcome { reject: p >= design.gamma, excluded: false, means: Some(post.beta_mean()) })
    };
    let outcomes = run_trials(design.n_trials, exec, "design", trial)?;
    Ok(summarize(&outcomes))
}

/// Regression rejection rate from the large-sample normal approximation to
/// the posterior of `beta1` (Student-t for normal data), fixed a0 only.
/// Trials whose mode search fails are excluded and counted.
pub fn power_glm_approx(
    endpoint: &EndpointSpec,
    design: &DesignSpec,
    historical: &[HistoricalSet],
    samp_beta: &SamplingPrior,
    sim: &GlmSimulation,
    stream: &RngStream,
    exec: &Execution,
) -> Result<OperatingCharacteristic> {
    if !endpoint.is_canonical() {
        return Err(PpdError::Configuration("the approximation requires a canonical link".into()));
    }
    let (size, pool, hist) = glm_inputs(endpoint, design, historical, samp_beta, sim)?;
    let a0: Vec<f64> = historical
        .iter()
        .enumerate()
        .map(|(k, h)| {
            h.a0.ok_or_else(|| PpdError::Configuration(format!("the approximation requires a fixed a0 (historical[{k}])")))
        })
        .collect::<Result<_>>()?;
    let trial = |b: usize| -> Result<TrialOutcome> {
        let trial_stream = stream.child(b as u64);
        let mut data_rng = trial_stream.child(0).rng();
        let atom = pick_atom(samp_beta, &mut data_rng);
        let beta: Vec<f64> = samp_beta.draws.row(atom).iter().copied().collect();
        let var = samp_beta.variance_draws.as_ref().map(|v| v[atom]);
        let current = simulate_glm(endpoint, &pool, &beta, var, size, sim.allocation, &mut data_rng)?;
        let fit = weighted_mode(endpoint, Some(&current), &hist, &a0)?;
        if !fit.converged {
            return Ok(TrialOutcome { excluded: true, ..Default::default() });
        }
        let sd = fit.covariance[(1, 1)].sqrt();
        let z = (design.delta - fit.mode[1]) / sd;
        let p = match fit.df {
            Some(df) => StudentsT::new(0.0, 1.0, df).map_or(f64::NAN, |t| t.cdf(z)),
            None => std_normal_cdf(z),
        };
        Ok(TrialOutcome { reject: p >= design.gamma, excluded: false, means: Some(fit.mode.iter().copied().collect()) })
    };
    let outcomes = run_trials(design.n_trials, exec, "design", trial)?;
    let oc = summarize(&outcomes);
    if oc.excluded as f64 > MAX_EXCLUDED_SHARE * design.n_trials as f64 {
        return Err(PpdError::TooManyExcludedTrials { excluded: oc.excluded, trials: design.n_trials });
    }
    if oc.excluded > 0 {
        log::warn!("{} of {} trials excluded (mode search did not converge)", oc.excluded, design.n_trials);
    }
    Ok(oc)
}

/// Splits a total sample size by treatment:control ratio `r`.
pub fn split_sample_size(n: u64, ratio: f64) -> (u64, u64) {
    let n_t = (n as f64 * ratio / (1.0 + ratio)).round() as u64;
    (n_t, n - n_t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub n: u64,
    pub type_i_error: OperatingCharacteristic,
    pub power: OperatingCharacteristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeTable {
    pub rows: Vec<SampleSizeRow>,
    pub alpha0: f64,
    pub alpha1: f64,
    pub n_alpha0: Option<u64>,
    pub n_alpha1: Option<u64>,
    pub n_final: Option<u64>,
    /// Constraints no grid point satisfied.
    pub unsatisfied: Vec<String>,
}

/// Evaluates `evaluate(n) -> (type I error, power)` along `n_grid` and
/// returns the smallest sizes meeting each constraint and their maximum.
pub fn find_sample_size<F>(mut evaluate: F, alpha0: f64, alpha1: f64, n_grid: &[u64]) -> Result<SampleSizeTable>
where
    F: FnMut(u64) -> Result<(OperatingCharacteristic, OperatingCharacteristic)>,
{
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PpdError::InvalidInput("n_grid must be nonempty and increasing".into()));
    }
    for (name, v) in [("alpha0", alpha0), ("alpha1", alpha1)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(PpdError::InvalidInput(format!("{name} must lie in [0, 1]")));
        }
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let (type_i_error, power) = evaluate(n)?;
        rows.push(SampleSizeRow { n, type_i_error, power });
    }
    Ok(sample_size_from_rows(rows, alpha0, alpha1))
}

pub fn sample_size_from_rows(rows: Vec<SampleSizeRow>, alpha0: f64, alpha1: f64) -> SampleSizeTable {
    let n_alpha0 = rows.iter().find(|r| r.type_i_error.estimate <= alpha0).map(|r| r.n);
    let n_alpha1 = rows.iter().find(|r| r.power.estimate >= 1.0 - alpha1).map(|r| r.n);
    let mut unsatisfied = Vec::new();
    if n_alpha0.is_none() {
        unsatisfied.push(format!("type I error <= {alpha0}"));
    }
    if n_alpha1.is_none() {
        unsatisfied.push(format!("power >= {}", 1.0 - alpha1));
    }
    let n_final = n_alpha0.zip(n_alpha1).map(|(a, b)| a.max(b));
    SampleSizeTable { rows, alpha0, alpha1, n_alpha0, n_alpha1, n_final, unsatisfied }
}
