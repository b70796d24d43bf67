//! Control-arm posterior inference without covariates, under the power prior
//! (fixed a0) and the normalized power prior (random a0), plus the posterior
//! probability that the treatment effect lies below the null boundary.
//!
//! Non-normal arms use conjugate updates. With fixed a0 the posterior is
//!
//! - Bernoulli: `Beta(s1 + y_c + sum a0k y0k, s2 + (n_c - y_c) + sum a0k (n0k - y0k))`
//! - Poisson: `Gamma(s1 + y_c + sum a0k y0k, rate s2 + n_c + sum a0k n0k)`
//! - Exponential (rate): `Gamma(s1 + n_c + sum a0k n0k, rate s2 + y_c + sum a0k y0k)`
//!
//! and with random a0 the control mean is integrated out so the a0 target
//! carries the normalizing constant exactly.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, Normal as NormalSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Gamma, StudentsT};
use statrs::function::beta::inv_beta_reg;

use crate::error::{PpdError, Result};
use crate::mcmc::{
    gamma_draw, gibbs_normal_mean, gibbs_normal_precision, slice_step, LocationPrior,
    NormalComponent, NormalStats, PrecisionPrior, SliceConfig,
};
use crate::model::{EndpointSpec, Family, HistoricalSet, InitialPrior, PriorSpec, TwoGroupSummary};
use crate::quadrature;
use crate::routing::{estimation_method, A0Kind, EstimationMethod, ModelKind};
use crate::special::{ln_beta, ln_beta_kernel, ln_beta_pdf, ln_gamma, LN_2PI};

/// Absolute tolerance for posterior probabilities computed by quadrature.
pub const INTEGRATION_TOLERANCE: f64 = 1e-6;

/// Closed-form posterior of a non-normal arm mean. Gamma uses shape/rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConjugatePosterior {
    Beta { shape1: f64, shape2: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl ConjugatePosterior {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Beta { shape1, shape2 } => shape1 / (shape1 + shape2),
            Self::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Beta { shape1, shape2 } => {
                let s = shape1 + shape2;
                shape1 * shape2 / (s * s * (s + 1.0))
            }
            Self::Gamma { shape, rate } => shape / (rate * rate),
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Self::Beta { .. } => (0.0, 1.0),
            Self::Gamma { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Beta { shape1, shape2 } => Beta::new(shape1, shape2).map_or(f64::NAN, |d| d.cdf(x)),
            Self::Gamma { shape, rate } => Gamma::new(shape, rate).map_or(f64::NAN, |d| d.cdf(x)),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Beta { shape1, shape2 } => ln_beta_pdf(x, shape1, shape2),
            Self::Gamma { shape, rate } => {
                if x > 0.0 {
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Self::Beta { shape1, shape2 } => inv_beta_reg(shape1, shape2, p),
            Self::Gamma { shape, rate } => Gamma::new(shape, rate).map_or(f64::NAN, |d| d.inverse_cdf(p)),
        }
    }

    /// Log of the normalizing integral of the unnormalized kernel,
    /// `ln B(a, b)` or `ln Gamma(shape) - shape ln(rate)`.
    pub fn ln_normalizer(&self) -> f64 {
        match *self {
            Self::Beta { shape1, shape2 } => ln_beta(shape1, shape2),
            Self::Gamma { shape, rate } => ln_gamma(shape) - shape * rate.ln(),
        }
    }

    /// Whether the density is bounded on its support.
    pub fn has_bounded_density(&self) -> bool {
        match *self {
            Self::Beta { shape1, shape2 } => shape1 >= 1.0 && shape2 >= 1.0,
            Self::Gamma { shape, .. } => shape >= 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Self::Beta { shape1, shape2 } => {
                let d = BetaSampler::new(shape1, shape2)
                    .map_err(|e| PpdError::InvalidInput(format!("beta({shape1}, {shape2}): {e}")))?;
                Ok(d.sample(rng))
            }
            Self::Gamma { shape, rate } => gamma_draw(shape, rate, rng),
        }
    }

    fn add(&self, inc: (f64, f64)) -> Self {
        match *self {
            Self::Beta { shape1, shape2 } => Self::Beta { shape1: shape1 + inc.0, shape2: shape2 + inc.1 },
            Self::Gamma { shape, rate } => Self::Gamma { shape: shape + inc.0, rate: rate + inc.1 },
        }
    }
}

/// Scale on which the treatment effect is compared with `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectScale {
    /// `mu_t - mu_c < delta`
    Difference,
    /// `mu_t / mu_c < delta` (exponential hazards)
    Ratio,
}

impl EffectScale {
    pub fn for_family(family: Family) -> Self {
        if family == Family::Exponential {
            Self::Ratio
        } else {
            Self::Difference
        }
    }

    /// Largest treatment value still in the alternative for a given control value.
    #[inline]
    fn boundary(self, control: f64, delta: f64) -> f64 {
        match self {
            Self::Difference => control + delta,
            Self::Ratio => control * delta,
        }
    }

    #[inline]
    fn inverse_boundary(self, treatment: f64, delta: f64) -> f64 {
        match self {
            Self::Difference => treatment - delta,
            Self::Ratio => treatment / delta,
        }
    }
}

/// Conjugate increments contributed by one arm's summary, before weighting.
fn increments(family: Family, s: &TwoGroupSummary) -> (f64, f64) {
    let n = s.n as f64;
    match family {
        Family::Bernoulli | Family::Binomial => (s.y_sum, n - s.y_sum),
        Family::Poisson => (s.y_sum, n),
        Family::Exponential => (n, s.y_sum),
        Family::Normal => unreachable!("normal arms have no conjugate mean posterior"),
    }
}

fn conjugate_prior(prior: InitialPrior) -> Result<ConjugatePosterior> {
    match prior {
        InitialPrior::Beta { shape1, shape2 } => Ok(ConjugatePosterior::Beta { shape1, shape2 }),
        InitialPrior::Gamma { shape, rate } => Ok(ConjugatePosterior::Gamma { shape, rate }),
        other => Err(PpdError::InvalidInput(format!("{other:?} is not a conjugate mean prior"))),
    }
}

fn weighted_increments<'a>(
    family: Family,
    parts: impl IntoIterator<Item = (&'a TwoGroupSummary, f64)>,
) -> (f64, f64) {
    parts.into_iter().fold((0.0, 0.0), |acc, (s, w)| {
        let inc = increments(family, s);
        (acc.0 + w * inc.0, acc.1 + w * inc.1)
    })
}

/// Posterior of an arm mean under the power prior with fixed weights.
pub fn conjugate_posterior<'a>(
    family: Family,
    prior: InitialPrior,
    current: Option<&TwoGroupSummary>,
    historical: impl IntoIterator<Item = (&'a TwoGroupSummary, f64)>,
) -> Result<ConjugatePosterior> {
    let base = conjugate_prior(prior)?;
    let mut inc = weighted_increments(family, historical);
    if let Some(c) = current {
        let ci = increments(family, c);
        inc = (inc.0 + ci.0, inc.1 + ci.1);
    }
    Ok(base.add(inc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupPosterior {
    pub mu_c_draws: Vec<f64>,
    /// Fixed a0, normal: columns are current then one per historical set.
    /// Random a0, normal: a single shared precision column.
    pub tau_draws: Option<DMatrix<f64>>,
    /// Random a0: one column per historical set.
    pub a0_draws: Option<DMatrix<f64>>,
    /// Exact posterior of the control mean when it is available in closed form.
    pub conjugate: Option<ConjugatePosterior>,
}

impl TwoGroupPosterior {
    pub fn mu_c_mean(&self) -> f64 {
        self.conjugate.map(|c| c.mean()).unwrap_or_else(|| mean(&self.mu_c_draws))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fixed_weights(historical: &[HistoricalSet]) -> Result<Vec<(&TwoGroupSummary, f64)>> {
    historical
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let s = h.as_summary().ok_or_else(|| {
                PpdError::InvalidInput(format!("historical[{k}] must be summary data"))
            })?;
            let a0 = h.a0.ok_or_else(|| {
                PpdError::InvalidInput(format!("historical[{k}] needs a fixed a0"))
            })?;
            Ok((s, a0))
        })
        .collect()
}

fn summaries(historical: &[HistoricalSet]) -> Result<Vec<&TwoGroupSummary>> {
    historical
        .iter()
        .enumerate()
        .map(|(k, h)| {
            h.as_summary()
                .ok_or_else(|| PpdError::InvalidInput(format!("historical[{k}] must be summary data")))
        })
        .collect()
}

pub(crate) fn normal_stats(s: &TwoGroupSummary) -> NormalStats {
    NormalStats { n: s.n as f64, mean: s.mean(), sum_squares: s.sum_squares() }
}

/// Log of `int int prod_k L(mu, tau | D_k)^{w_k} / tau dmu dtau` for normal
/// data with a flat mean prior; `None` when the integral diverges.
pub(crate) fn normal_log_c(parts: &[(NormalStats, f64)]) -> Option<f64> {
    let total: f64 = parts.iter().map(|(s, w)| w * s.n).sum();
    if !(total > 1.0) {
        return None;
    }
    let m = parts.iter().map(|(s, w)| w * s.n * s.mean).sum::<f64>() / total;
    let ss: f64 = parts.iter().map(|(s, w)| w * s.residual_ss(m)).sum();
    if !(ss > 0.0) {
        return None;
    }
    let half_df = 0.5 * (total - 1.0);
    Some(-0.5 * (total - 1.0) * LN_2PI - 0.5 * total.ln() + ln_gamma(half_df) - half_df * (0.5 * ss).ln())
}

/// Control posterior with fixed a0 from each historical set.
pub fn fit_fixed_a0<R: Rng + ?Sized>(
    endpoint: &EndpointSpec,
    current: &TwoGroupSummary,
    historical: &[HistoricalSet],
    prior: &PriorSpec,
    n_mc: usize,
    n_bi: usize,
    rng: &mut R,
) -> Result<TwoGroupPosterior> {
    check_lengths(n_mc, n_bi)?;
    let weights = fixed_weights(historical)?;
    if current.n == 0 && historical.is_empty() {
        return Err(PpdError::PosteriorImproper("no current or historical data".into()));
    }
    let family = endpoint.family;
    match estimation_method(family, ModelKind::TwoGroup, A0Kind::Fixed) {
        EstimationMethod::NumericalIntegration => {
            let post = conjugate_posterior(
                family,
                prior.control_prior(family),
                Some(current),
                weights.iter().copied(),
            )?;
            let draws = (0..n_mc - n_bi).map(|_| post.sample(rng)).collect::<Result<Vec<_>>>()?;
            Ok(TwoGroupPosterior {
                mu_c_draws: draws,
                tau_draws: None,
                a0_draws: None,
                conjugate: Some(post),
            })
        }
        EstimationMethod::Gibbs => normal_fixed_gibbs(current, &weights, n_mc, n_bi, rng),
        other => unreachable!("two-group fixed a0 routed to {other:?}"),
    }
}

fn check_lengths(n_mc: usize, n_bi: usize) -> Result<()> {
    if n_mc <= n_bi {
        return Err(PpdError::InvalidInput(format!("n_mc ({n_mc}) must exceed n_bi ({n_bi})")));
    }
    Ok(())
}

fn normal_fixed_gibbs<R: Rng + ?Sized>(
    current: &TwoGroupSummary,
    weights: &[(&TwoGroupSummary, f64)],
    n_mc: usize,
    n_bi: usize,
    rng: &mut R,
) -> Result<TwoGroupPosterior> {
    let cur = normal_stats(current);
    let hist: Vec<(NormalStats, f64)> = weights.iter().map(|(s, a)| (normal_stats(s), *a)).collect();
    if cur.n == 0.0 && hist.iter().all(|(s, a)| *a * s.n == 0.0) {
        return Err(PpdError::PosteriorImproper("all data carry zero weight".into()));
    }
    let kept = n_mc - n_bi;
    let mut mu_draws = Vec::with_capacity(kept);
    let mut tau_draws = DMatrix::zeros(kept, 1 + hist.len());
    let mut tau_c = 1.0;
    let mut tau_h = vec![1.0; hist.len()];
    let mut comps = Vec::with_capacity(1 + hist.len());
    for iter in 0..n_mc {
        comps.clear();
        if cur.n > 0.0 {
            comps.push(NormalComponent { stats: cur, weight: 1.0, precision: tau_c });
        }
        for ((s, a), &t) in hist.iter().zip(&tau_h) {
            comps.push(NormalComponent { stats: *s, weight: *a, precision: t });
        }
        let mu = gibbs_normal_mean(&comps, LocationPrior::Flat, rng)?;
        if cur.n > 0.0 {
            tau_c = gibbs_normal_precision(&cur, 1.0, mu, PrecisionPrior::Jeffreys, rng)?;
        }
        for ((s, a), t) in hist.iter().zip(tau_h.iter_mut()) {
            // A zero-weight set leaves its precision unidentified; it is held fixed.
            if *a > 0.0 {
                *t = gibbs_normal_precision(s, *a, mu, PrecisionPrior::Jeffreys, rng)?;
            }
        }
        if iter >= n_bi {
            let row = iter - n_bi;
            mu_draws.push(mu);
            tau_draws[(row, 0)] = tau_c;
            for (k, &t) in tau_h.iter().enumerate() {
                tau_draws[(row, k + 1)] = t;
            }
        }
    }
    Ok(TwoGroupPosterior {
        mu_c_draws: mu_draws,
        tau_draws: Some(tau_draws),
        a0_draws: None,
        conjugate: None,
    })
}

/// Control posterior under the normalized power prior with independent
/// Beta(a0_shape1, a0_shape2) priors on each a0k.
#[allow(clippy::too_many_arguments)]
pub fn fit_random_a0<R: Rng + ?Sized>(
    endpoint: &EndpointSpec,
    current: &TwoGroupSummary,
    historical: &[HistoricalSet],
    prior: &PriorSpec,
    slice_cfgs: &[SliceConfig],
    n_mc: usize,
    n_bi: usize,
    rng: &mut R,
) -> Result<TwoGroupPosterior> {
    check_lengths(n_mc, n_bi)?;
    let hist = summaries(historical)?;
    if hist.is_empty() {
        return Err(PpdError::InvalidInput("random a0 needs at least one historical set".into()));
    }
    let cfgs = a0_slice_configs(slice_cfgs, hist.len())?;
    let family = endpoint.family;
    let (s1, s2) = (prior.a0_shape1, prior.a0_shape2);
    let ln_a0_prior = |a: f64| ln_beta_kernel(a, s1, s2);
    let kept = n_mc - n_bi;
    let mut a0 = vec![0.5; hist.len()];
    let mut a0_draws = DMatrix::zeros(kept, hist.len());
    let mut mu_draws = Vec::with_capacity(kept);

    match estimation_method(family, ModelKind::TwoGroup, A0Kind::Random) {
        EstimationMethod::Slice => {
            let base = conjugate_prior(prior.control_prior(family))?;
            let hist_inc: Vec<(f64, f64)> = hist.iter().map(|s| increments(family, s)).collect();
            let cur_inc = increments(family, current);
            let power_prior = |a0: &[f64]| {
                let inc = a0
                    .iter()
                    .zip(&hist_inc)
                    .fold((0.0, 0.0), |acc, (a, i)| (acc.0 + a * i.0, acc.1 + a * i.1));
                base.add(inc)
            };
            // ln of the a0 marginal with the control mean integrated out.
            let ln_marginal = |a0: &[f64]| {
                let pp = power_prior(a0);
                pp.add(cur_inc).ln_normalizer() - pp.ln_normalizer()
            };
            for iter in 0..n_mc {
                for k in 0..a0.len() {
                    let mut trial = a0.clone();
                    a0[k] = slice_step(
                        |x| {
                            trial[k] = x;
                            ln_marginal(&trial) + ln_a0_prior(x)
                        },
                        a0[k],
                        &cfgs[k],
                        rng,
                    )?;
                }
                let mu = power_prior(&a0).add(cur_inc).sample(rng)?;
                if iter >= n_bi {
                    mu_draws.push(mu);
                    a0_draws.row_mut(iter - n_bi).copy_from_slice(&a0);
                }
            }
            Ok(TwoGroupPosterior {
                mu_c_draws: mu_draws,
                tau_draws: None,
                a0_draws: Some(a0_draws),
                conjugate: None,
            })
        }
        EstimationMethod::GibbsAndSlice => {
            let cur = normal_stats(current);
            let hist: Vec<NormalStats> = hist.iter().map(|s| normal_stats(s)).collect();
            let parts = |a0: &[f64], with_current: bool| {
                let mut p: Vec<(NormalStats, f64)> = hist.iter().copied().zip(a0.iter().copied()).collect();
                if with_current && cur.n > 0.0 {
                    p.push((cur, 1.0));
                }
                p
            };
            let ln_marginal = |a0: &[f64]| match (normal_log_c(&parts(a0, true)), normal_log_c(&parts(a0, false))) {
                (Some(post), Some(norm)) => post - norm,
                _ => f64::NEG_INFINITY,
            };
            let mut tau_draws = DMatrix::zeros(kept, 1);
            for iter in 0..n_mc {
                for k in 0..a0.len() {
                    let mut trial = a0.clone();
                    a0[k] = slice_step(
                        |x| {
                            trial[k] = x;
                            ln_marginal(&trial) + ln_a0_prior(x)
                        },
                        a0[k],
                        &cfgs[k],
                        rng,
                    )?;
                }
                // Shared precision and mean given a0, drawn from their exact conditionals.
                let p = parts(&a0, true);
                let total: f64 = p.iter().map(|(s, w)| w * s.n).sum();
                let m = p.iter().map(|(s, w)| w * s.n * s.mean).sum::<f64>() / total;
                let ss: f64 = p.iter().map(|(s, w)| w * s.residual_ss(m)).sum();
                let tau = gamma_draw(0.5 * (total - 1.0), 0.5 * ss, rng)?;
                let mu = NormalSampler::new(m, (tau * total).recip().sqrt())
                    .map_err(|e| PpdError::InvalidInput(e.to_string()))?
                    .sample(rng);
                if iter >= n_bi {
                    let row = iter - n_bi;
                    mu_draws.push(mu);
                    tau_draws[(row, 0)] = tau;
                    a0_draws.row_mut(row).copy_from_slice(&a0);
                }
            }
            Ok(TwoGroupPosterior {
                mu_c_draws: mu_draws,
                tau_draws: Some(tau_draws),
                a0_draws: Some(a0_draws),
                conjugate: None,
            })
        }
        other => unreachable!("two-group random a0 routed to {other:?}"),
    }
}

pub(crate) fn a0_slice_configs(given: &[SliceConfig], k: usize) -> Result<Vec<SliceConfig>> {
    if given.is_empty() {
        return Ok(vec![SliceConfig::a0(); k]);
    }
    if given.len() < k {
        return Err(PpdError::InvalidInput(format!(
            "{} slice configs supplied for {k} a0 parameters",
            given.len()
        )));
    }
    for cfg in &given[..k] {
        cfg.check()?;
        if cfg.lower < 0.0 || cfg.upper > 1.0 {
            return Err(PpdError::InvalidInput("a0 slice bounds must lie within [0, 1]".into()));
        }
    }
    Ok(given[..k].to_vec())
}

/// Posterior of the treatment-arm mean (no borrowing on the treatment arm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmPosterior {
    Conjugate(ConjugatePosterior),
    /// Flat mean prior with Jeffreys precision: `ybar + sqrt(v/n) t_{n-1}`.
    StudentT { location: f64, scale: f64, df: f64 },
}

impl ArmPosterior {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Conjugate(c) => c.cdf(x),
            Self::StudentT { location, scale, df } => {
                StudentsT::new(location, scale, df).map_or(f64::NAN, |t| t.cdf(x))
            }
        }
    }
}

pub fn treatment_posterior(
    endpoint: &EndpointSpec,
    treatment: &TwoGroupSummary,
    prior: &PriorSpec,
) -> Result<ArmPosterior> {
    if treatment.n == 0 {
        return Err(PpdError::InvalidInput("treatment data must be nonempty".into()));
    }
    match endpoint.family {
        Family::Normal => {
            let v = treatment.v.unwrap_or(0.0);
            if treatment.n < 2 || !(v > 0.0) {
                return Err(PpdError::DegenerateData);
            }
            let n = treatment.n as f64;
            Ok(ArmPosterior::StudentT { location: treatment.mean(), scale: (v / n).sqrt(), df: n - 1.0 })
        }
        family => Ok(ArmPosterior::Conjugate(conjugate_posterior(
            family,
            prior.treatment_prior(family),
            Some(treatment),
            [],
        )?)),
    }
}

/// `P(mu_t - mu_c < delta | data)`, or `P(mu_t / mu_c < delta | data)` for
/// exponential hazards. Conjugate control posteriors are integrated
/// numerically; otherwise the treatment CDF is averaged over control draws.
pub fn reject_probability(
    endpoint: &EndpointSpec,
    post_c: &TwoGroupPosterior,
    treatment: &TwoGroupSummary,
    prior: &PriorSpec,
    delta: f64,
) -> Result<f64> {
    let scale = EffectScale::for_family(endpoint.family);
    let t_post = treatment_posterior(endpoint, treatment, prior)?;
    match (post_c.conjugate, t_post) {
        (Some(c), ArmPosterior::Conjugate(t)) => prob_effect_below(&c, &t, delta, scale),
        _ => {
            if post_c.mu_c_draws.is_empty() {
                return Err(PpdError::InvalidInput("control posterior has no draws".into()));
            }
            let total: f64 =
                post_c.mu_c_draws.iter().map(|&mu| t_post.cdf(scale.boundary(mu, delta))).sum();
            Ok(total / post_c.mu_c_draws.len() as f64)
        }
    }
}

/// `P(T < boundary(C))` for independent conjugate posteriors, by adaptive
/// Gauss–Kronrod quadrature to absolute tolerance 1e-6.
pub fn prob_effect_below(
    control: &ConjugatePosterior,
    treatment: &ConjugatePosterior,
    delta: f64,
    scale: EffectScale,
) -> Result<f64> {
    if scale == EffectScale::Ratio && delta <= 0.0 {
        return Ok(0.0);
    }
    let shifts = [-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0];
    let p = if control.has_bounded_density() {
        let extra: Vec<f64> = shifts
            .iter()
            .map(|k| scale.inverse_boundary(treatment.mean() + k * treatment.sd(), delta))
            .collect();
        integrate_against(control, |x| treatment.cdf(scale.boundary(x, delta)), &extra)?
    } else if treatment.has_bounded_density() {
        let extra: Vec<f64> = shifts
            .iter()
            .map(|k| scale.boundary(control.mean() + k * control.sd(), delta))
            .collect();
        integrate_against(treatment, |y| 1.0 - control.cdf(scale.inverse_boundary(y, delta)), &extra)?
    } else {
        // Both densities unbounded: integrate over control quantiles.
        let mut breaks = vec![0.0, 1.0];
        breaks.extend(shifts.iter().map(|k| {
            control.cdf(scale.inverse_boundary(treatment.mean() + k * treatment.sd(), delta))
        }));
        let breaks = clean_breaks(breaks, 0.0, 1.0);
        let q = quadrature::integrate(
            |u| treatment.cdf(scale.boundary(control.quantile(u), delta)),
            &breaks,
            INTEGRATION_TOLERANCE,
            2_000,
        )?;
        q.value
    };
    Ok(p.clamp(0.0, 1.0))
}

fn clean_breaks(mut points: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    points.retain(|x| x.is_finite());
    for x in points.iter_mut() {
        *x = x.clamp(lo, hi);
    }
    points.push(lo);
    points.push(hi);
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// `int f(x) h(x) dx` for a bounded density `f` and `h` in [0, 1].
fn integrate_against<H: Fn(f64) -> f64>(
    dist: &ConjugatePosterior,
    h: H,
    extra_breaks: &[f64],
) -> Result<f64> {
    let (smin, smax) = dist.support();
    let (m, s) = (dist.mean(), dist.sd());
    let lo = smin.max(m - 30.0 * s);
    let hi = smax.min(m + 30.0 * s);
    let mut breaks: Vec<f64> = [-8.0, -5.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 5.0, 8.0]
        .iter()
        .map(|k| m + k * s)
        .collect();
    breaks.extend_from_slice(extra_breaks);
    let breaks = clean_breaks(breaks, lo, hi);
    let q = quadrature::integrate(
        |x| {
            let lp = dist.ln_pdf(x);
            if lp == f64::NEG_INFINITY {
                0.0
            } else {
                lp.exp() * h(x)
            }
        },
        &breaks,
        0.5 * INTEGRATION_TOLERANCE,
        2_000,
    )?;
    let tail_lo = if lo > smin { dist.cdf(lo) } else { 0.0 };
    let tail_hi = if hi < smax { 1.0 - dist.cdf(hi) } else { 0.0 };
    let error = q.abs_error + tail_lo + tail_hi;
    let value = q.value + tail_lo * h(lo) + tail_hi * h(hi);
    if error > INTEGRATION_TOLERANCE {
        return Err(PpdError::IntegrationFailed {
            estimate: value,
            error,
            tolerance: INTEGRATION_TOLERANCE,
            intervals: q.intervals,
        });
    }
    Ok(value)
}
