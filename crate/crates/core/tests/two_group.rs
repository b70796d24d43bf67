use ppd_core::mcmc::SliceConfig;
use ppd_core::model::{EndpointSpec, Family, HistoricalSet, PriorSpec, TwoGroupSummary};
use ppd_core::two_group::{
    conjugate_posterior, fit_fixed_a0, fit_random_a0, prob_effect_below, reject_probability, ConjugatePosterior,
    EffectScale,
};
use ppd_core::RngStream;
use rand_distr::{Beta, Distribution};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn bern() -> EndpointSpec {
    EndpointSpec::canonical(Family::Bernoulli)
}

#[test]
fn quadrature_matches_brute_force_monte_carlo() {
    let t = ConjugatePosterior::Beta { shape1: 45.0, shape2: 492.0 };
    let c = ConjugatePosterior::Beta { shape1: 23.2, shape2: 228.7 };
    let got = prob_effect_below(&c, &t, 0.041, EffectScale::Difference).unwrap();
    let mut rng = RngStream::new(99, 0).rng();
    let bt = Beta::new(45.0, 492.0).unwrap();
    let bc = Beta::new(23.2, 228.7).unwrap();
    let n = 10_000_000;
    let hits = (0..n).filter(|_| bt.sample(&mut rng) - bc.sample(&mut rng) < 0.041).count();
    let oracle = hits as f64 / n as f64;
    assert!((got - oracle).abs() < 0.005, "{got} vs {oracle}");
}

#[test]
fn gamma_difference_matches_monte_carlo() {
    let t = ConjugatePosterior::Gamma { shape: 40.0, rate: 20.0 };
    let c = ConjugatePosterior::Gamma { shape: 55.0, rate: 25.0 };
    let mut rng = RngStream::new(5, 0).rng();
    let n = 400_000;
    let (mut diff_hits, mut ratio_hits) = (0, 0);
    for _ in 0..n {
        let a = t.sample(&mut rng).unwrap();
        let b = c.sample(&mut rng).unwrap();
        diff_hits += usize::from(a - b < -0.1);
        ratio_hits += usize::from(a / b < 0.9);
    }
    let diff = prob_effect_below(&c, &t, -0.1, EffectScale::Difference).unwrap();
    let ratio = prob_effect_below(&c, &t, 0.9, EffectScale::Ratio).unwrap();
    assert!((diff - diff_hits as f64 / n as f64).abs() < 0.004);
    assert!((ratio - ratio_hits as f64 / n as f64).abs() < 0.004);
}

#[test]
fn full_weight_equals_pooling() {
    let prior = PriorSpec::default();
    let current = TwoGroupSummary::new(10.0, 120);
    let hist = TwoGroupSummary::new(44.0, 535);
    let borrowed =
        conjugate_posterior(Family::Bernoulli, prior.control_prior(Family::Bernoulli), Some(&current), [(&hist, 1.0)])
            .unwrap();
    let pooled = conjugate_posterior(
        Family::Bernoulli,
        prior.control_prior(Family::Bernoulli),
        Some(&TwoGroupSummary::new(54.0, 655)),
        [],
    )
    .unwrap();
    assert_eq!(borrowed, pooled);
}

#[test]
fn borrowing_shrinks_variance() {
    let prior = PriorSpec::default();
    let current = TwoGroupSummary::new(9.0, 100);
    let hist = TwoGroupSummary::new(45.0, 500);
    let mut last = f64::INFINITY;
    for i in 0..=10 {
        let a = i as f64 / 10.0;
        let v = conjugate_posterior(Family::Bernoulli, prior.control_prior(Family::Bernoulli), Some(&current), [(&hist, a)])
            .unwrap()
            .variance();
        assert!(v <= last);
        last = v;
    }
}

#[test]
fn degenerate_a0_priors_recover_fixed_limits() {
    let prior_hi = PriorSpec { a0_shape1: 1e6, a0_shape2: 1.0, ..PriorSpec::default() };
    let prior_lo = PriorSpec { a0_shape1: 1.0, a0_shape2: 1e6, ..PriorSpec::default() };
    let current = TwoGroupSummary::new(30.0, 200);
    let hist = vec![HistoricalSet::summary(TwoGroupSummary::new(44.0, 535), None)];
    let family = Family::Bernoulli;
    let full = conjugate_posterior(family, prior_hi.control_prior(family), Some(&current), [(hist[0].as_summary().unwrap(), 1.0)])
        .unwrap();
    let none = conjugate_posterior(family, prior_lo.control_prior(family), Some(&current), []).unwrap();

    let mut rng = RngStream::new(21, 0).rng();
    let post = fit_random_a0(&bern(), &current, &hist, &prior_hi, &[], 20_250, 250, &mut rng).unwrap();
    assert!((mean(&post.mu_c_draws) - full.mean()).abs() < 0.005);
    let post = fit_random_a0(&bern(), &current, &hist, &prior_lo, &[], 20_250, 250, &mut rng).unwrap();
    assert!((mean(&post.mu_c_draws) - none.mean()).abs() < 0.005);
}

#[test]
fn agreement_increases_borrowing() {
    let current = TwoGroupSummary::new(250.0, 500);
    let hist = vec![HistoricalSet::summary(TwoGroupSummary::new(50_000.0, 100_000), None)];
    let mut rng = RngStream::new(8, 0).rng();
    let post = fit_random_a0(&bern(), &current, &hist, &PriorSpec::default(), &[], 10_250, 250, &mut rng).unwrap();
    let a0 = post.a0_draws.unwrap();
    assert!(a0.column(0).mean() > 0.5);
}

#[test]
fn random_a0_draws_respect_supports() {
    let mut rng = RngStream::new(13, 0).rng();
    let hist = vec![
        HistoricalSet::summary(TwoGroupSummary::new(12.0, 40), None),
        HistoricalSet::summary(TwoGroupSummary::new(20.0, 30), None),
    ];
    let cfgs = [SliceConfig::a0(), SliceConfig::new(0.2, 0.9, 0.05).unwrap()];
    let post = fit_random_a0(
        &EndpointSpec::canonical(Family::Poisson),
        &TwoGroupSummary::new(15.0, 30),
        &hist,
        &PriorSpec::default(),
        &cfgs,
        3_000,
        100,
        &mut rng,
    )
    .unwrap();
    assert!(post.mu_c_draws.iter().all(|&m| m > 0.0));
    let a0 = post.a0_draws.unwrap();
    assert!(a0.column(0).iter().all(|&a| a > 0.0 && a < 1.0));
    assert!(a0.column(1).iter().all(|&a| a > 0.2 && a < 0.9));
}

#[test]
fn normal_random_a0_has_one_shared_precision() {
    let mut rng = RngStream::new(3, 0).rng();
    let hist = vec![
        HistoricalSet::summary(TwoGroupSummary::normal(50.0, 50, 1.2), None),
        HistoricalSet::summary(TwoGroupSummary::normal(45.0, 40, 0.8), None),
    ];
    let post = fit_random_a0(
        &EndpointSpec::canonical(Family::Normal),
        &TwoGroupSummary::normal(30.0, 30, 1.0),
        &hist,
        &PriorSpec::default(),
        &[],
        2_000,
        100,
        &mut rng,
    )
    .unwrap();
    let tau = post.tau_draws.unwrap();
    assert_eq!(tau.ncols(), 1);
    assert!(tau.iter().all(|&t| t > 0.0));
}

#[test]
fn normal_fixed_a0_matches_conjugate_limit() {
    // No historical data: mu | data ~ ybar + sqrt(v/n) t_{n-1}.
    let mut rng = RngStream::new(17, 0).rng();
    let current = TwoGroupSummary::normal(60.0, 40, 2.0);
    let post = fit_fixed_a0(&EndpointSpec::canonical(Family::Normal), &current, &[], &PriorSpec::default(), 40_250, 250, &mut rng)
        .unwrap();
    let m = mean(&post.mu_c_draws);
    let var = post.mu_c_draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / post.mu_c_draws.len() as f64;
    let exact_var = 2.0 / 40.0 * 39.0 / 37.0;
    assert!((m - 1.5).abs() < 0.01, "{m}");
    assert!((var / exact_var - 1.0).abs() < 0.05, "{var} vs {exact_var}");
    assert_eq!(post.tau_draws.unwrap().ncols(), 1);
}

#[test]
fn normal_reject_probability_uses_draws() {
    let mut rng = RngStream::new(4, 0).rng();
    let endpoint = EndpointSpec::canonical(Family::Normal);
    let control = TwoGroupSummary::normal(0.0, 200, 1.0);
    let post = fit_fixed_a0(&endpoint, &control, &[], &PriorSpec::default(), 5_250, 250, &mut rng).unwrap();
    let treat = TwoGroupSummary::normal(0.0, 200, 1.0);
    let p = reject_probability(&endpoint, &post, &treat, &PriorSpec::default(), 0.0).unwrap();
    assert!((p - 0.5).abs() < 0.03, "{p}");
}
