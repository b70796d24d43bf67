//! Generalized linear models with power prior borrowing.
//!
//! Coefficients are laid out as `[intercept, treatment, covariates...]` when
//! current data are included, and `[intercept, covariates...]` otherwise.
//! Historical design matrices carry no treatment column; their coefficient
//! indices skip it.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PpdError, Result};
use crate::mcmc::{gamma_draw, slice_step, slice_step_from, SliceConfig};
use crate::model::{EndpointSpec, Family, GlmData, HistoricalSet, Link, PriorSpec};
use crate::normconst::PolySurface;
use crate::routing::{estimation_method, A0Kind, EstimationMethod, ModelKind};
use crate::special::{ln_beta_kernel, ln_gamma, ln_std_normal_cdf, softplus, LN_2PI};
use crate::two_group::a0_slice_configs;

/// Log-likelihood contribution of one row (binomial coefficients and other
/// parameter-free terms omitted). Returns `-inf` outside the link's support.
///
/// `trials` is the number of trials for binary data. For Poisson and
/// exponential data it is the number of pooled rows sharing `eta`, with `y`
/// their summed response (1 for a single row).
#[inline]
pub fn row_log_lik(endpoint: &EndpointSpec, y: f64, trials: f64, eta: f64) -> f64 {
    match (endpoint.family, endpoint.link) {
        (Family::Bernoulli | Family::Binomial, Link::Logit) => {
            y * eta - trials * softplus(eta)
        }
        (Family::Bernoulli | Family::Binomial, link) => {
            let (lp, lq) = match link {
                Link::Probit => (ln_std_normal_cdf(eta), ln_std_normal_cdf(-eta)),
                Link::CLogLog => {
                    let e = eta.exp();
                    ((-(-e).exp_m1()).ln(), -e)
                }
                Link::IdentityProbability => {
                    if !(eta > 0.0 && eta < 1.0) {
                        return f64::NEG_INFINITY;
                    }
                    (eta.ln(), (-eta).ln_1p())
                }
                _ => return f64::NAN,
            };
            xlogy(y, lp) + xlogy(trials - y, lq)
        }
        (Family::Poisson, Link::Log) => y * eta - trials * eta.exp(),
        (Family::Poisson, Link::IdentityPositive) => {
            if eta > 0.0 {
                xlogy(y, eta.ln()) - trials * eta
            } else {
                f64::NEG_INFINITY
            }
        }
        // Exponential responses with rate g^{-1}(eta).
        (Family::Exponential, Link::Log) => trials * eta - eta.exp() * y,
        (Family::Exponential, Link::IdentityPositive) => {
            if eta > 0.0 {
                trials * eta.ln() - eta * y
            } else {
                f64::NEG_INFINITY
            }
        }
        (Family::Normal, _) => -0.5 * (y - eta) * (y - eta),
        _ => f64::NAN,
    }
}

/// `y * lp` with the convention `0 * -inf = 0`.
#[inline]
fn xlogy(y: f64, lp: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y * lp
    }
}

/// Link applied to a mean-scale value (for exponential data, to the rate).
fn link_forward(link: Link, mu: f64) -> f64 {
    match link {
        Link::Logit => (mu / (1.0 - mu)).ln(),
        Link::Probit => -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * mu),
        Link::CLogLog => (-(-mu).ln_1p()).ln(),
        Link::Log => mu.ln(),
        Link::IdentityPositive | Link::IdentityProbability | Link::Identity => mu,
    }
}

/// One dataset mapped into coefficient space.
#[derive(Debug, Clone)]
struct Block {
    /// Design in coefficient space, intercept column included.
    x: DMatrix<f64>,
    y: Vec<f64>,
    trials: Vec<f64>,
    /// Coefficients with a nonzero column in this block.
    active: Vec<bool>,
    eta: Vec<f64>,
}

impl Block {
    /// Rows with identical covariates are pooled into one for non-normal
    /// families; the pooled row's likelihood equals the sum of its members'.
    fn new(data: &GlmData, index_of: &[usize], dim: usize, family: Family) -> Self {
        let pool = family != Family::Normal;
        let mut groups: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        let mut trials = Vec::new();
        for i in 0..data.rows() {
            let mut row = vec![0.0; dim];
            row[0] = 1.0;
            for (j, &b) in index_of.iter().enumerate() {
                row[b] = data.x[(i, j)];
            }
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            match groups.get(&key) {
                Some(&g) if pool => {
                    y[g] += data.y[i];
                    trials[g] += data.trials_at(i);
                }
                _ => {
                    groups.insert(key, rows.len());
                    rows.push(row);
                    y.push(data.y[i]);
                    trials.push(data.trials_at(i));
                }
            }
        }
        let n = rows.len();
        let x = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
        let active = (0..dim).map(|j| x.column(j).iter().any(|&v| v != 0.0)).collect();
        Self { x, y, trials, active, eta: vec![0.0; n] }
    }

    fn set_beta(&mut self, beta: &[f64]) {
        let b = DVector::from_column_slice(beta);
        let eta = &self.x * b;
        self.eta.copy_from_slice(eta.as_slice());
    }

    fn log_lik(&self, endpoint: &EndpointSpec) -> f64 {
        self.y
            .iter()
            .zip(&self.trials)
            .zip(&self.eta)
            .map(|((&y, &m), &eta)| row_log_lik(endpoint, y, m, eta))
            .sum()
    }

    /// Log-likelihood after moving coefficient `j` by `delta`.
    fn log_lik_shifted(&self, endpoint: &EndpointSpec, j: usize, delta: f64) -> f64 {
        if !self.active[j] {
            return self.log_lik(endpoint);
        }
        let col = self.x.column(j);
        let mut total = 0.0;
        for i in 0..self.y.len() {
            total += row_log_lik(endpoint, self.y[i], self.trials[i], self.eta[i] + delta * col[i]);
        }
        total
    }

    fn shift(&mut self, j: usize, delta: f64) {
        if !self.active[j] {
            return;
        }
        for (e, &x) in self.eta.iter_mut().zip(self.x.column(j).iter()) {
            *e += delta * x;
        }
    }
}

/// Datasets of a regression problem in a common coefficient layout.
#[derive(Debug, Clone)]
pub struct GlmProblem {
    pub endpoint: EndpointSpec,
    /// Number of coefficients.
    pub dim: usize,
    has_current: bool,
    current: Option<Block>,
    historical: Vec<Block>,
}

impl GlmProblem {
    /// Builds the coefficient layout. Without current data the treatment
    /// coefficient is dropped.
    pub fn new(endpoint: &EndpointSpec, current: Option<&GlmData>, historical: &[&GlmData]) -> Result<Self> {
        if !endpoint.family.supports(endpoint.link) {
            return Err(PpdError::InvalidInput(format!(
                "{:?} link is not available for {:?}",
                endpoint.link, endpoint.family
            )));
        }
        let p_hist = match (current, historical.first()) {
            (Some(c), _) => {
                if c.covariates() == 0 {
                    return Err(PpdError::InvalidInput(
                        "current data need a treatment column".into(),
                    ));
                }
                c.covariates() - 1
            }
            (None, Some(h)) => h.covariates(),
            (None, None) => {
                return Err(PpdError::InvalidInput("no current or historical data".into()));
            }
        };
        for (k, h) in historical.iter().enumerate() {
            if h.covariates() != p_hist {
                return Err(PpdError::InvalidInput(format!(
                    "historical[{k}] has {} covariates, expected {p_hist}",
                    h.covariates()
                )));
            }
        }
        let (dim, hist_index): (usize, Vec<usize>) = if current.is_some() {
            (2 + p_hist, (0..p_hist).map(|j| j + 2).collect())
        } else {
            (1 + p_hist, (0..p_hist).map(|j| j + 1).collect())
        };
        let cur_index: Vec<usize> = (1..=p_hist + 1).collect();
        Ok(Self {
            endpoint: *endpoint,
            dim,
            has_current: current.is_some(),
            current: current.map(|c| Block::new(c, &cur_index, dim, endpoint.family)),
            historical: historical.iter().map(|h| Block::new(h, &hist_index, dim, endpoint.family)).collect(),
        })
    }

    pub fn historical_sets(&self) -> usize {
        self.historical.len()
    }

    pub fn includes_current(&self) -> bool {
        self.has_current
    }

    /// Log-likelihood of each historical set at `beta`.
    pub fn historical_log_lik(&mut self, beta: &[f64]) -> Vec<f64> {
        let endpoint = self.endpoint;
        self.historical
            .iter_mut()
            .map(|b| {
                b.set_beta(beta);
                b.log_lik(&endpoint)
            })
            .collect()
    }

    /// Unnormalized log power prior `sum_k a0k log L(beta | D0k)` under a
    /// flat initial prior.
    pub fn log_power_prior_kernel(&mut self, beta: &[f64], a0: &[f64]) -> f64 {
        let ll = self.historical_log_lik(beta);
        a0.iter().zip(ll).filter(|(a, _)| **a != 0.0).map(|(a, l)| a * l).sum()
    }

    /// Log-likelihood of the current data at `beta` (0 when absent).
    pub fn current_log_lik(&mut self, beta: &[f64]) -> f64 {
        let endpoint = self.endpoint;
        match self.current.as_mut() {
            Some(b) => {
                b.set_beta(beta);
                b.log_lik(&endpoint)
            }
            None => 0.0,
        }
    }

    fn set_beta(&mut self, beta: &[f64]) {
        if let Some(c) = self.current.as_mut() {
            c.set_beta(beta);
        }
        for b in &mut self.historical {
            b.set_beta(beta);
        }
    }

    fn weighted_log_lik_shifted(&self, a0: &[f64], j: usize, delta: f64) -> f64 {
        let mut total = match &self.current {
            Some(c) => c.log_lik_shifted(&self.endpoint, j, delta),
            None => 0.0,
        };
        for (b, &a) in self.historical.iter().zip(a0) {
            if a != 0.0 {
                total += a * b.log_lik_shifted(&self.endpoint, j, delta);
            }
        }
        total
    }

    fn shift(&mut self, j: usize, delta: f64) {
        if let Some(c) = self.current.as_mut() {
            c.shift(j, delta);
        }
        for b in &mut self.historical {
            b.shift(j, delta);
        }
    }

    /// Starting point: intercept at the link of the pooled mean response.
    fn initial_beta(&self) -> Vec<f64> {
        let mut sum_y = 0.0;
        let mut sum_m = 0.0;
        for b in self.current.iter().chain(&self.historical) {
            sum_y += b.y.iter().sum::<f64>();
            sum_m += b.trials.iter().sum::<f64>();
        }
        let mean = sum_y / sum_m.max(1.0);
        let target = match self.endpoint.family {
            Family::Bernoulli | Family::Binomial => mean.clamp(0.01, 0.99),
            Family::Poisson => mean.max(0.01),
            Family::Exponential => 1.0 / mean.max(1e-8),
            Family::Normal => mean,
        };
        let mut beta = vec![0.0; self.dim];
        beta[0] = link_forward(self.endpoint.link, target);
        beta
    }

    /// Sum of a0-weighted log-likelihoods that define the posterior of beta.
    fn check_proper(&self, a0: &[f64]) -> Result<()> {
        if self.current.is_none() && a0.iter().all(|&a| a == 0.0) {
            return Err(PpdError::PosteriorImproper("all data carry zero weight".into()));
        }
        Ok(())
    }

    /// One coordinate-wise slice sweep over the coefficients.
    fn beta_sweep<R: Rng + ?Sized>(
        &mut self,
        beta: &mut [f64],
        a0: &[f64],
        widths: &SliceWidths,
        rng: &mut R,
    ) -> Result<()> {
        // Refresh the linear predictors to stop rounding drift.
        self.set_beta(beta);
        // The joint log density carries over from one coordinate to the next.
        let mut current = self.weighted_log_lik_shifted(a0, 0, 0.0);
        for (j, bj) in beta.iter_mut().enumerate().take(self.dim) {
            let b = *bj;
            let cfg = widths.config(j);
            let (new, value) =
                slice_step_from(|x| self.weighted_log_lik_shifted(a0, j, x - b), b, current, &cfg, rng).map_err(
                    |e| match e {
                        PpdError::SliceStalled { .. } => PpdError::SliceStalled { coordinate: Some(j) },
                        other => other,
                    },
                )?;
            self.shift(j, new - b);
            *bj = new;
            current = value;
        }
        Ok(())
    }
}

/// Per-coefficient slice widths. They start at the configured width and are
/// set once, at the end of burn-in, to three times the spread of the second
/// half of the burn-in draws; the kept draws use a fixed kernel.
struct SliceWidths {
    base: SliceConfig,
    widths: Vec<f64>,
    n_bi: usize,
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl SliceWidths {
    /// Fewer burn-in draws than this leave the configured width alone.
    const MIN_BURN_IN: usize = 20;

    fn new(base: SliceConfig, dim: usize, n_bi: usize) -> Self {
        Self { base, widths: vec![base.width; dim], n_bi, count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn config(&self, j: usize) -> SliceConfig {
        SliceConfig { width: self.widths[j], ..self.base }
    }

    fn observe(&mut self, iter: usize, beta: &[f64]) {
        if self.n_bi < Self::MIN_BURN_IN || iter < self.n_bi / 2 || iter >= self.n_bi {
            return;
        }
        self.count += 1.0;
        for (j, &b) in beta.iter().enumerate() {
            let d = b - self.mean[j];
            self.mean[j] += d / self.count;
            self.m2[j] += d * (b - self.mean[j]);
        }
        if iter + 1 == self.n_bi {
            let span = self.base.upper - self.base.lower;
            for (w, m2) in self.widths.iter_mut().zip(&self.m2) {
                let sd = (m2 / (self.count - 1.0)).sqrt();
                if sd.is_finite() && sd > 0.0 {
                    *w = (3.0 * sd).min(span);
                }
            }
        }
    }
}

/// Posterior draws for a regression model (rows are kept iterations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmPosterior {
    pub beta_draws: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_draws: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0_draws: Option<DMatrix<f64>>,
}

impl GlmPosterior {
    pub fn beta_mean(&self) -> Vec<f64> {
        column_means(&self.beta_draws)
    }

    pub fn a0_mean(&self) -> Option<Vec<f64>> {
        self.a0_draws.as_ref().map(column_means)
    }
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols()).map(|j| m.column(j).mean()).collect()
}

/// Chain lengths and slice settings for regression samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub n_mc: usize,
    pub n_bi: usize,
    pub beta_slice: SliceConfig,
    /// One per historical set; empty for defaults.
    pub a0_slice: Vec<SliceConfig>,
}

impl McmcSettings {
    pub fn new(n_mc: usize, n_bi: usize) -> Self {
        Self { n_mc, n_bi, beta_slice: SliceConfig::new(-100.0, 100.0, 1.0).unwrap(), a0_slice: Vec::new() }
    }

    fn kept(&self) -> Result<usize> {
        if self.n_mc <= self.n_bi {
            return Err(PpdError::InvalidInput(format!(
                "n_mc ({}) must exceed n_bi ({})",
                self.n_mc, self.n_bi
            )));
        }
        self.beta_slice.check()?;
        Ok(self.n_mc - self.n_bi)
    }
}

fn glm_parts(historical: &[HistoricalSet]) -> Result<Vec<&GlmData>> {
    historical
        .iter()
        .enumerate()
        .map(|(k, h)| {
            h.as_glm()
                .ok_or_else(|| PpdError::InvalidInput(format!("historical[{k}] must be regression data")))
        })
        .collect()
}

fn fixed_a0(historical: &[HistoricalSet]) -> Result<Vec<f64>> {
    historical
        .iter()
        .enumerate()
        .map(|(k, h)| h.a0.ok_or_else(|| PpdError::InvalidInput(format!("historical[{k}] needs a fixed a0"))))
        .collect()
}

/// Posterior under the power prior with fixed a0. Without current data this
/// samples the power prior itself.
pub fn fit_glm_fixed_a0<R: Rng + ?Sized>(
    endpoint: &EndpointSpec,
    current: Option<&GlmData>,
    historical: &[HistoricalSet],
    settings: &McmcSettings,
    rng: &mut R,
) -> Result<GlmPosterior> {
    let a0 = fixed_a0(historical)?;
    let hist = glm_parts(historical)?;
    sample_fixed(endpoint, current, &hist, &a0, settings, rng)
}

pub(crate) fn sample_fixed<R: Rng + ?Sized>(
    endpoint: &EndpointSpec,
    current: Option<&GlmData>,
    historical: &[&GlmData],
    a0: &[f64],
    settings: &McmcSettings,
    rng: &mut R,
) -> Result<GlmPosterior> {
    let kept = settings.kept()?;
    let mut problem = GlmProblem::new(endpoint, current, historical)?;
    problem.check_proper(a0)?;
    match estimation_method(endpoint.family, ModelKind::Glm, A0Kind::Fixed) {
        EstimationMethod::Slice => {
            let mut beta = problem.initial_beta();
            let mut draws = DMatrix::zeros(kept, problem.dim);
            let mut widths = SliceWidths::new(settings.beta_slice, problem.dim, settings.n_bi);
            for iter in 0..settings.n_mc {
                problem.beta_sweep(&mut beta, a0, &widths, rng)?;
                widths.observe(iter, &beta);
                if iter >= settings.n_bi {
                    draws.row_mut(iter - settings.n_bi).copy_from_slice(&beta);
                }
            }
            Ok(GlmPosterior { beta_draws: draws, tau_draws: None, a0_draws: None })
        }
        EstimationMethod::Gibbs => {
            let normal = NormalRegression::new(&problem);
            normal.gibbs_unshared(a0, settings, kept, rng)
        }
        other => unreachable!("regression fixed a0 routed to {other:?}"),
    }
}

/// Source of `log c(a0)` for the normalized power prior.
#[derive(Debug, Clone, Copy)]
pub enum LogNormalizer<'a> {
    Surface(&'a PolySurface),
    /// Closed form for normal linear models with a shared precision.
    NormalAnalytic,
}

/// Posterior under the normalized power prior with independent beta priors
/// on each a0k.
pub fn fit_glm_random_a0<R: Rng + ?Sized>(
    endpoint: &EndpointSpec,
    current: Option<&GlmData>,
    historical: &[HistoricalSet],
    prior: &PriorSpec,
    normalizer: LogNormalizer<'_>,
    settings: &McmcSettings,
    rng: &mut R,
) -> Result<GlmPosterior> {
    let kept = settings.kept()?;
    let hist = glm_parts(historical)?;
    if hist.is_empty() {
        return Err(PpdError::InvalidInput("random a0 needs at least one historical set".into()));
    }
    let mut problem = GlmProblem::new(endpoint, current, &hist)?;
    let k = hist.len();
    let (s1, s2) = (prior.a0_shape1, prior.a0_shape2);
    let a0_cfgs = random_a0_slices(&settings.a0_slice, k, normalizer)?;
    if let LogNormalizer::Surface(s) = normalizer {
        if s.dims() != k {
            return Err(PpdError::InvalidInput(format!(
                "surface has {} dimensions, expected {k}",
                s.dims()
            )));
        }
    }
    match estimation_method(endpoint.family, ModelKind::Glm, A0Kind::Random) {
        EstimationMethod::SliceAndPwk => {
            let LogNormalizer::Surface(surface) = normalizer else {
                return Err(PpdError::InvalidInput(
                    "a normalizing-constant surface is required for this family".into(),
                ));
            };
            let mut beta = problem.initial_beta();
            let mut a0: Vec<f64> = a0_cfgs.iter().map(|c| 0.5 * (c.lower + c.upper)).collect();
            let mut beta_draws = DMatrix::zeros(kept, problem.dim);
            let mut a0_draws = DMatrix::zeros(kept, k);
            let mut widths = SliceWidths::new(settings.beta_slice, problem.dim, settings.n_bi);
            for iter in 0..settings.n_mc {
                problem.beta_sweep(&mut beta, &a0, &widths, rng)?;
                widths.observe(iter, &beta);
                let ll = problem.historical_log_lik(&beta);
                for j in 0..k {
                    let mut trial = a0.clone();
                    let mut failure = None;
                    a0[j] = slice_step(
                        |x| {
                            trial[j] = x;
                            let power: f64 = trial.iter().zip(&ll).map(|(a, l)| a * l).sum();
                            match surface.eval(&trial) {
                                Ok(log_c) => power - log_c + ln_beta_kernel(x, s1, s2),
                                Err(e) => {
                                    failure.get_or_insert(e);
                                    f64::NEG_INFINITY
                                }
                            }
                        },
                        a0[j],
                        &a0_cfgs[j],
                        rng,
                    )?;
                    if let Some(e) = failure {
                        return Err(e);
                    }
                }
                if iter >= settings.n_bi {
                    beta_draws.row_mut(iter - settings.n_bi).copy_from_slice(&beta);
                    a0_draws.row_mut(iter - settings.n_bi).copy_from_slice(&a0);
                }
            }
            Ok(GlmPosterior { beta_draws, tau_draws: None, a0_draws: Some(a0_draws) })
        }
        EstimationMethod::GibbsAndSlice => {
            let normal = NormalRegression::new(&problem);
            normal.collapsed_random(normalizer, (s1, s2), &a0_cfgs, settings, kept, rng)
        }
        other => unreachable!("regression random a0 routed to {other:?}"),
    }
}

/// a0 slice bounds default to the surface's fitted range, since the surface
/// must not be evaluated outside it.
fn random_a0_slices(given: &[SliceConfig], k: usize, normalizer: LogNormalizer<'_>) -> Result<Vec<SliceConfig>> {
    match normalizer {
        LogNormalizer::Surface(s) if given.is_empty() => {
            (0..k).map(|j| {
                let (lo, hi) = s.hull()[j];
                SliceConfig::new(lo, hi, 0.1f64.min(hi - lo))
            })
            .collect()
        }
        _ => a0_slice_configs(given, k),
    }
}

/// Cross-products of one normal dataset in coefficient space.
#[derive(Debug, Clone)]
struct NormalCross {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    n: f64,
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl NormalCross {
    fn new(b: &Block) -> Self {
        let y = DVector::from_column_slice(&b.y);
        Self { xtx: b.x.transpose() * &b.x, xty: b.x.transpose() * &y, yty: y.dot(&y), n: b.y.len() as f64, x: b.x.clone(), y }
    }

    fn rss(&self, beta: &DVector<f64>) -> f64 {
        (&self.y - &self.x * beta).norm_squared()
    }
}

/// Normal linear model pieces for Gibbs and collapsed updates.
struct NormalRegression {
    dim: usize,
    current: Option<NormalCross>,
    historical: Vec<NormalCross>,
    /// Historical parameter space: intercept and covariates only.
    hist_index: Vec<usize>,
}

/// Sufficient statistics of one data set with its weight: (X'X, X'y, y'y, n, weight).
type CrossPart<'a> = (&'a DMatrix<f64>, &'a DVector<f64>, f64, f64, f64);
type OwnedCrossPart = (DMatrix<f64>, DVector<f64>, f64, f64, f64);

/// Log of `int int prod_k L(beta, tau | D_k)^{w_k} / tau dbeta dtau` with
/// flat `beta` of dimension `q`; `None` if the integral diverges.
fn normal_regression_log_c(parts: &[CrossPart<'_>], q: usize) -> Option<f64> {
    let dim = parts.first()?.1.len();
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    let mut s_yy = 0.0;
    let mut total = 0.0;
    for (xtx, xty, yty, n, w) in parts {
        if *w == 0.0 {
            continue;
        }
        a += *xtx * *w;
        b += *xty * *w;
        s_yy += w * yty;
        total += w * n;
    }
    if !(total > q as f64) {
        return None;
    }
    let chol = a.clone().cholesky()?;
    let fitted = chol.solve(&b);
    let ss = s_yy - b.dot(&fitted);
    if !(ss > 0.0) {
        return None;
    }
    let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let half_df = 0.5 * (total - q as f64);
    Some(
        -0.5 * total * LN_2PI + 0.5 * q as f64 * LN_2PI - 0.5 * ln_det + ln_gamma(half_df)
            - half_df * (0.5 * ss).ln(),
    )
}

impl NormalRegression {
    fn new(problem: &GlmProblem) -> Self {
        let hist_index = if problem.has_current {
            std::iter::once(0).chain(2..problem.dim).collect()
        } else {
            (0..problem.dim).collect()
        };
        Self {
            dim: problem.dim,
            current: problem.current.as_ref().map(NormalCross::new),
            historical: problem.historical.iter().map(NormalCross::new).collect(),
            hist_index,
        }
    }

    fn draw_beta<R: Rng + ?Sized>(&self, precision: DMatrix<f64>, rhs: DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
        let chol = precision
            .cholesky()
            .ok_or_else(|| PpdError::PosteriorImproper("coefficient precision is singular".into()))?;
        let mean = chol.solve(&rhs);
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        // beta = mean + L^{-T} z has covariance (L L^T)^{-1}.
        let offset = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| PpdError::PosteriorImproper("coefficient precision is singular".into()))?;
        Ok(mean + offset)
    }

    /// Gibbs sampler with a separate precision per dataset.
    fn gibbs_unshared<R: Rng + ?Sized>(
        &self,
        a0: &[f64],
        settings: &McmcSettings,
        kept: usize,
        rng: &mut R,
    ) -> Result<GlmPosterior> {
        let sets: Vec<(&NormalCross, f64)> = self
            .current
            .iter()
            .map(|c| (c, 1.0))
            .chain(self.historical.iter().zip(a0.iter().copied()))
            .collect();
        let mut tau = vec![1.0; sets.len()];
        let mut beta_draws = DMatrix::zeros(kept, self.dim);
        let mut tau_draws = DMatrix::zeros(kept, sets.len());
        for iter in 0..settings.n_mc {
            let mut precision = DMatrix::zeros(self.dim, self.dim);
            let mut rhs = DVector::zeros(self.dim);
            for ((c, w), t) in sets.iter().zip(&tau) {
                if *w > 0.0 {
                    precision += &c.xtx * (w * t);
                    rhs += &c.xty * (w * t);
                }
            }
            let beta = self.draw_beta(precision, rhs, rng)?;
            for ((c, w), t) in sets.iter().zip(tau.iter_mut()) {
                // A zero-weight set leaves its precision unidentified; it is held fixed.
                if *w > 0.0 {
                    let rss = c.rss(&beta);
                    if !(rss > 0.0) {
                        return Err(PpdError::DegenerateData);
                    }
                    *t = gamma_draw(0.5 * w * c.n, 0.5 * w * rss, rng)?;
                }
            }
            if iter >= settings.n_bi {
                let row = iter - settings.n_bi;
                beta_draws.row_mut(row).copy_from_slice(beta.as_slice());
                tau_draws.row_mut(row).copy_from_slice(&tau);
            }
        }
        Ok(GlmPosterior { beta_draws, tau_draws: Some(tau_draws), a0_draws: None })
    }

    fn hist_parts(&self, a0: &[f64], reduced: bool) -> Vec<OwnedCrossPart> {
        self.historical
            .iter()
            .zip(a0)
            .map(|(c, &w)| {
                if reduced {
                    let xtx = c.xtx.select_rows(&self.hist_index).select_columns(&self.hist_index);
                    let xty = c.xty.select_rows(&self.hist_index);
                    (xtx, xty, c.yty, c.n, w)
                } else {
                    (c.xtx.clone(), c.xty.clone(), c.yty, c.n, w)
                }
            })
            .collect()
    }

    /// `log c(a0)` of the power prior in the historical parameter space.
    fn log_c_prior(&self, a0: &[f64]) -> Option<f64> {
        let parts = self.hist_parts(a0, true);
        let refs: Vec<_> = parts.iter().map(|(a, b, c, d, e)| (a, b, *c, *d, *e)).collect();
        normal_regression_log_c(&refs, self.hist_index.len())
    }

    fn log_c_posterior(&self, a0: &[f64]) -> Option<f64> {
        let mut parts = self.hist_parts(a0, self.current.is_none());
        if let Some(c) = &self.current {
            parts.push((c.xtx.clone(), c.xty.clone(), c.yty, c.n, 1.0));
        }
        let refs: Vec<_> = parts.iter().map(|(a, b, c, d, e)| (a, b, *c, *d, *e)).collect();
        let q = if self.current.is_some() { self.dim } else { self.hist_index.len() };
        normal_regression_log_c(&refs, q)
    }

    /// a0 by slice sampling from its marginal (beta and tau integrated out),
    /// then tau | a0 and beta | tau, a0 exactly.
    fn collapsed_random<R: Rng + ?Sized>(
        &self,
        normalizer: LogNormalizer<'_>,
        (s1, s2): (f64, f64),
        a0_cfgs: &[SliceConfig],
        settings: &McmcSettings,
        kept: usize,
        rng: &mut R,
    ) -> Result<GlmPosterior> {
        let k = self.historical.len();
        let mut a0: Vec<f64> = a0_cfgs.iter().map(|c| 0.5 * (c.lower + c.upper)).collect();
        let mut beta_draws = DMatrix::zeros(kept, self.dim);
        let mut tau_draws = DMatrix::zeros(kept, 1);
        let mut a0_draws = DMatrix::zeros(kept, k);
        for iter in 0..settings.n_mc {
            for j in 0..k {
                let mut trial = a0.clone();
                let mut failure = None;
                a0[j] = slice_step(
                    |x| {
                        trial[j] = x;
                        let log_c = match normalizer {
                            LogNormalizer::NormalAnalytic => self.log_c_prior(&trial),
                            LogNormalizer::Surface(s) => match s.eval(&trial) {
                                Ok(v) => Some(v),
                                Err(e) => {
                                    failure.get_or_insert(e);
                                    None
                                }
                            },
                        };
                        match (self.log_c_posterior(&trial), log_c) {
                            (Some(post), Some(c)) => post - c + ln_beta_kernel(x, s1, s2),
                            _ => f64::NEG_INFINITY,
                        }
                    },
                    a0[j],
                    &a0_cfgs[j],
                    rng,
                )?;
                if let Some(e) = failure {
                    return Err(e);
                }
            }
            // Shared precision, then coefficients, given a0.
            let mut precision = DMatrix::zeros(self.dim, self.dim);
            let mut rhs = DVector::zeros(self.dim);
            let mut s_yy = 0.0;
            let mut total = 0.0;
            for (c, w) in self.current.iter().map(|c| (c, 1.0)).chain(self.historical.iter().zip(a0.iter().copied())) {
                precision += &c.xtx * w;
                rhs += &c.xty * w;
                s_yy += w * c.yty;
                total += w * c.n;
            }
            let chol = precision
                .clone()
                .cholesky()
                .ok_or_else(|| PpdError::PosteriorImproper("coefficient precision is singular".into()))?;
            let ss = s_yy - rhs.dot(&chol.solve(&rhs));
            if !(ss > 0.0) || !(total > self.dim as f64) {
                return Err(PpdError::DegenerateData);
            }
            let tau = gamma_draw(0.5 * (total - self.dim as f64), 0.5 * ss, rng)?;
            let beta = self.draw_beta(precision * tau, rhs * tau, rng)?;
            if iter >= settings.n_bi {
                let row = iter - settings.n_bi;
                beta_draws.row_mut(row).copy_from_slice(beta.as_slice());
                tau_draws[(row, 0)] = tau;
                a0_draws.row_mut(row).copy_from_slice(&a0);
            }
        }
        Ok(GlmPosterior { beta_draws, tau_draws: Some(tau_draws), a0_draws: Some(a0_draws) })
    }
}

/// Closed-form `log c(a0)` for a normal linear power prior with shared
/// precision, flat coefficients and a `1/tau` prior.
pub fn normal_power_prior_log_c(historical: &[&GlmData], a0: &[f64]) -> Result<f64> {
    let endpoint = EndpointSpec::canonical(Family::Normal);
    let problem = GlmProblem::new(&endpoint, None, historical)?;
    let normal = NormalRegression::new(&problem);
    normal
        .log_c_prior(a0)
        .ok_or_else(|| PpdError::PosteriorImproper(format!("power prior diverges at a0 = {a0:?}")))
}

/// Outcome of maximizing an a0-weighted log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    pub mode: DVector<f64>,
    /// Inverse of the negative Hessian at the mode.
    pub covariance: DMatrix<f64>,
    /// Residual degrees of freedom (normal family only).
    pub df: Option<f64>,
    pub converged: bool,
}

const NEWTON_MAX_ITER: usize = 100;

/// Posterior mode and curvature under a flat prior for canonical links:
/// weighted least squares for normal data, Newton–Raphson with step
/// halving otherwise.
pub fn weighted_mode(
    endpoint: &EndpointSpec,
    current: Option<&GlmData>,
    historical: &[&GlmData],
    a0: &[f64],
) -> Result<ModeFit> {
    if !endpoint.is_canonical() {
        return Err(PpdError::InvalidInput("approximation requires a canonical link".into()));
    }
    let problem = GlmProblem::new(endpoint, current, historical)?;
    problem.check_proper(a0)?;
    let weights: Vec<f64> = problem.current.iter().map(|_| 1.0).chain(a0.iter().copied()).collect();
    if endpoint.family == Family::Normal {
        let normal = NormalRegression::new(&problem);
        let mut xtx = DMatrix::zeros(problem.dim, problem.dim);
        let mut xty = DVector::zeros(problem.dim);
        let mut total = 0.0;
        let sets: Vec<&NormalCross> = normal.current.iter().chain(&normal.historical).collect();
        for (c, &w) in sets.iter().zip(&weights) {
            xtx += &c.xtx * w;
            xty += &c.xty * w;
            total += w * c.n;
        }
        let Some(chol) = xtx.cholesky() else {
            return Ok(ModeFit { mode: DVector::zeros(problem.dim), covariance: DMatrix::zeros(problem.dim, problem.dim), df: None, converged: false });
        };
        let mode = chol.solve(&xty);
        let rss: f64 = sets.iter().zip(&weights).map(|(c, w)| w * c.rss(&mode)).sum();
        let df = total - problem.dim as f64;
        if !(df > 0.0) {
            return Ok(ModeFit { mode, covariance: DMatrix::zeros(problem.dim, problem.dim), df: None, converged: false });
        }
        let sigma2 = rss / df;
        return Ok(ModeFit { mode, covariance: chol.inverse() * sigma2, df: Some(df), converged: true });
    }

    let dim = problem.dim;
    let endpoint = *endpoint;
    let blocks: Vec<&Block> = problem.current.iter().chain(&problem.historical).collect();
    let objective = |beta: &DVector<f64>| -> f64 {
        blocks
            .iter()
            .zip(&weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(b, w)| {
                let eta = &b.x * beta;
                w * b.y.iter().zip(&b.trials).zip(eta.iter()).map(|((&y, &m), &e)| row_log_lik(&endpoint, y, m, e)).sum::<f64>()
            })
            .sum()
    };
    let grad_hess = |beta: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for (b, &w) in blocks.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let eta = &b.x * beta;
            let mut score = DVector::zeros(b.y.len());
            let mut curv = DVector::zeros(b.y.len());
            for i in 0..b.y.len() {
                let (s, c) = canonical_score(endpoint.family, b.y[i], b.trials[i], eta[i]);
                score[i] = w * s;
                curv[i] = w * c;
            }
            g += b.x.transpose() * score;
            let mut xw = b.x.clone();
            for (mut col, _) in xw.column_iter_mut().zip(0..) {
                col.component_mul_assign(&curv);
            }
            h += b.x.transpose() * xw;
        }
        (g, h)
    };

    let mut beta = DVector::from_vec(problem.initial_beta());
    let mut value = objective(&beta);
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let (g, h) = grad_hess(&beta);
        let Some(chol) = h.clone().cholesky() else { break };
        let step = chol.solve(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &beta + &step * t;
            let v = objective(&candidate);
            if v.is_finite() && v >= value - 1e-12 * value.abs() {
                beta = candidate;
                let gain = v - value;
                value = v;
                accepted = true;
                if gain.abs() < 1e-10 * (1.0 + value.abs()) && (&step * t).amax() < 1e-8 * (1.0 + beta.amax()) {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No ascent possible along the Newton direction: at the mode up to rounding.
            converged = g.amax() < 1e-6 * (1.0 + value.abs());
            break;
        }
        if converged || g.amax() < 1e-9 {
            converged = true;
            break;
        }
    }
    let (_, h) = grad_hess(&beta);
    let covariance = match h.cholesky() {
        Some(c) => c.inverse(),
        None => {
            converged = false;
            DMatrix::zeros(dim, dim)
        }
    };
    let converged = converged && beta.iter().all(|b| b.is_finite());
    Ok(ModeFit { mode: beta, covariance, df: None, converged })
}

/// Score and negative second derivative of one row's log-likelihood in eta
/// for canonical links.
#[inline]
fn canonical_score(family: Family, y: f64, m: f64, eta: f64) -> (f64, f64) {
    match family {
        Family::Bernoulli | Family::Binomial => {
            let p = crate::special::logistic(eta);
            (y - m * p, m * p * (1.0 - p))
        }
        Family::Poisson => {
            let mu = m * eta.exp();
            (y - mu, mu)
        }
        Family::Exponential => {
            let ly = eta.exp() * y;
            (m - ly, ly)
        }
        Family::Normal => (y - eta, 1.0),
    }
}
