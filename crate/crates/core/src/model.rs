//! Domain types shared by every engine, their validation rules, and the
//! link-function algebra.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PpdError, Result};
use crate::special::{logistic, std_normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Bernoulli,
    Binomial,
    Poisson,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Link {
    #[serde(rename = "logit")]
    Logit,
    #[serde(rename = "probit")]
    Probit,
    #[serde(rename = "log")]
    Log,
    #[serde(rename = "identity-positive")]
    IdentityPositive,
    #[serde(rename = "identity-probability")]
    IdentityProbability,
    #[serde(rename = "cloglog")]
    CLogLog,
    #[serde(rename = "identity")]
    Identity,
}

impl Family {
    pub const ALL: [Family; 5] =
        [Family::Normal, Family::Bernoulli, Family::Binomial, Family::Poisson, Family::Exponential];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Bernoulli => "bernoulli",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
            Family::Exponential => "exponential",
        }
    }

    pub fn canonical_link(self) -> Link {
        match self {
            Family::Normal => Link::Identity,
            Family::Bernoulli | Family::Binomial => Link::Logit,
            Family::Poisson | Family::Exponential => Link::Log,
        }
    }

    pub fn supports(self, link: Link) -> bool {
        match self {
            Family::Normal => link == Link::Identity,
            Family::Bernoulli | Family::Binomial => matches!(
                link,
                Link::Logit | Link::Probit | Link::IdentityProbability | Link::CLogLog
            ),
            Family::Poisson | Family::Exponential => {
                matches!(link, Link::Log | Link::IdentityPositive)
            }
        }
    }

    /// Binary responses, either one trial per row or collapsed counts.
    pub fn is_binary(self) -> bool {
        matches!(self, Family::Bernoulli | Family::Binomial)
    }
}

impl Link {
    pub const ALL: [Link; 7] = [
        Link::Logit,
        Link::Probit,
        Link::Log,
        Link::IdentityPositive,
        Link::IdentityProbability,
        Link::CLogLog,
        Link::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
            Link::Log => "log",
            Link::IdentityPositive => "identity-positive",
            Link::IdentityProbability => "identity-probability",
            Link::CLogLog => "cloglog",
            Link::Identity => "identity",
        }
    }

    /// Inverse link without a support check.
    #[inline]
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => logistic(eta),
            Link::Probit => std_normal_cdf(eta),
            Link::Log => eta.exp(),
            Link::CLogLog => -(-eta.exp()).exp_m1(),
            Link::IdentityPositive | Link::IdentityProbability | Link::Identity => eta,
        }
    }

    /// Open interval of means this link can produce.
    pub fn mean_range(self) -> (f64, f64) {
        match self {
            Link::Logit | Link::Probit | Link::CLogLog | Link::IdentityProbability => (0.0, 1.0),
            Link::Log | Link::IdentityPositive => (0.0, f64::INFINITY),
            Link::Identity => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = PpdError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| PpdError::InvalidInput(format!("unknown family `{s}`")))
    }
}

impl std::str::FromStr for Link {
    type Err = PpdError;

    fn from_str(s: &str) -> Result<Self> {
        Link::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| PpdError::InvalidInput(format!("unknown link `{s}`")))
    }
}

/// Mean-scale value `g^{-1}(eta)`. Identity-positive and identity-probability
/// links reject linear predictors outside their support.
pub fn link_eval(link: Link, eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(PpdError::InvalidInput(format!("linear predictor {eta} is not finite")));
    }
    let mean = link.inverse(eta);
    if matches!(link, Link::IdentityPositive | Link::IdentityProbability)
        && !link_inverse_domain_check(link, mean)
    {
        return Err(PpdError::LinkDomain { link, eta });
    }
    Ok(mean)
}

pub fn link_inverse_domain_check(link: Link, value: f64) -> bool {
    let (lo, hi) = link.mean_range();
    value > lo && value < hi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EndpointSpec {
    pub family: Family,
    pub link: Link,
}

impl EndpointSpec {
    pub fn new(family: Family, link: Link) -> Result<Self> {
        if !family.supports(link) {
            return Err(PpdError::InvalidInput(format!(
                "{link:?} link is not available for the {family:?} family"
            )));
        }
        Ok(Self { family, link })
    }

    pub fn canonical(family: Family) -> Self {
        Self { family, link: family.canonical_link() }
    }

    pub fn is_canonical(&self) -> bool {
        self.link == self.family.canonical_link()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(PpdError::Validation(self.violations))
        }
    }
}

/// Sufficient statistics for one arm of a two-group study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupSummary {
    /// Sum of responses.
    pub y_sum: f64,
    pub n: u64,
    /// Sample variance (n - 1 denominator); normal family only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
}

impl TwoGroupSummary {
    pub fn new(y_sum: f64, n: u64) -> Self {
        Self { y_sum, n, v: None }
    }

    pub fn normal(y_sum: f64, n: u64, v: f64) -> Self {
        Self { y_sum, n, v: Some(v) }
    }

    pub fn mean(&self) -> f64 {
        self.y_sum / self.n as f64
    }

    /// Within-sample sum of squares about the sample mean.
    pub fn sum_squares(&self) -> f64 {
        self.v.unwrap_or(0.0) * (self.n.saturating_sub(1)) as f64
    }

    pub fn violations(&self, family: Family, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.y_sum.is_finite() {
            out.push(Violation::new(format!("{path}.y_sum"), "must be finite"));
            return out;
        }
        let integral = self.y_sum.fract() == 0.0;
        match family {
            Family::Bernoulli | Family::Binomial => {
                if !integral || self.y_sum < 0.0 || self.y_sum > self.n as f64 {
                    out.push(Violation::new(
                        format!("{path}.y_sum"),
                        "must be an integer in [0, n] for binary data",
                    ));
                }
            }
            Family::Poisson => {
                if !integral || self.y_sum < 0.0 {
                    out.push(Violation::new(
                        format!("{path}.y_sum"),
                        "must be a non-negative integer for count data",
                    ));
                }
            }
            Family::Exponential => {
                if self.n > 0 && self.y_sum <= 0.0 {
                    out.push(Violation::new(
                        format!("{path}.y_sum"),
                        "must be positive for exponential data",
                    ));
                }
            }
            Family::Normal => {}
        }
        match (family, self.v) {
            (Family::Normal, None) => out.push(Violation::new(
                format!("{path}.v"),
                "variance required for normal family",
            )),
            (Family::Normal, Some(v)) if !(v >= 0.0 && v.is_finite()) => out.push(
                Violation::new(format!("{path}.v"), "variance must be finite and non-negative"),
            ),
            (Family::Normal, Some(_)) => {}
            (_, Some(_)) => out.push(Violation::new(
                format!("{path}.v"),
                "variance only applies to the normal family",
            )),
            (_, None) => {}
        }
        out
    }
}

/// Subject-level regression data. `x` holds covariates only; the intercept
/// is implicit. For current data the first column is the 0/1 treatment
/// indicator, historical data omit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmData {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    /// Binomial trial counts per row (collapsed Bernoulli form).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<u64>>,
}

impl GlmData {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>) -> Self {
        Self { y, x, trials: None }
    }

    pub fn with_trials(y: Vec<f64>, x: DMatrix<f64>, trials: Vec<u64>) -> Self {
        Self { y, x, trials: Some(trials) }
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn covariates(&self) -> usize {
        self.x.ncols()
    }

    /// Trial count for row `i` (1 when not collapsed).
    #[inline]
    pub fn trials_at(&self, i: usize) -> f64 {
        self.trials.as_ref().map_or(1.0, |t| t[i] as f64)
    }

    pub fn violations(&self, family: Family, path: &str, has_treatment: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.y.is_empty() {
            out.push(Violation::new(format!("{path}.y"), "no observations"));
        }
        if self.x.nrows() != self.y.len() {
            out.push(Violation::new(
                format!("{path}.x"),
                format!("has {} rows but y has {} entries", self.x.nrows(), self.y.len()),
            ));
            return out;
        }
        for j in 0..self.x.ncols() {
            let col = self.x.column(j);
            if col.iter().any(|v| !v.is_finite()) {
                out.push(Violation::new(format!("{path}.x[{j}]"), "contains non-finite values"));
            } else if !col.is_empty() && col.iter().all(|&v| v == 0.0) {
                out.push(Violation::new(format!("{path}.x[{j}]"), "column is constant zero"));
            }
        }
        if has_treatment {
            if self.x.ncols() == 0 {
                out.push(Violation::new(format!("{path}.x"), "treatment column required"));
            } else if self.x.column(0).iter().any(|&v| v != 0.0 && v != 1.0) {
                out.push(Violation::new(format!("{path}.x[0]"), "treatment indicator must be 0/1"));
            }
        }
        match (&self.trials, family) {
            (Some(t), Family::Binomial) => {
                if t.len() != self.y.len() {
                    out.push(Violation::new(
                        format!("{path}.trials"),
                        format!("has {} entries but y has {}", t.len(), self.y.len()),
                    ));
                } else {
                    for (i, (&m, &y)) in t.iter().zip(&self.y).enumerate() {
                        if m == 0 || !(y >= 0.0 && y <= m as f64 && y.fract() == 0.0) {
                            out.push(Violation::new(
                                format!("{path}.y[{i}]"),
                                format!("response {y} outside [0, {m}] trials"),
                            ));
                        }
                    }
                }
            }
            (None, Family::Binomial) => out.push(Violation::new(
                format!("{path}.trials"),
                "binomial family requires trial counts",
            )),
            (Some(_), _) => out.push(Violation::new(
                format!("{path}.trials"),
                "trial counts only apply to the binomial family",
            )),
            (None, _) => {}
        }
        for (i, &y) in self.y.iter().enumerate() {
            let ok = match family {
                Family::Normal => y.is_finite(),
                Family::Bernoulli => y == 0.0 || y == 1.0,
                Family::Binomial => y.is_finite(),
                Family::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
                Family::Exponential => y > 0.0 && y.is_finite(),
            };
            if !ok {
                out.push(Violation::new(
                    format!("{path}.y[{i}]"),
                    format!("response {y} outside the {family:?} support"),
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoricalPayload {
    Summary(TwoGroupSummary),
    Glm(GlmData),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalSet {
    pub payload: HistoricalPayload,
    /// Fixed discounting weight; absent when a0 is modeled as random.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
}

impl HistoricalSet {
    pub fn summary(data: TwoGroupSummary, a0: Option<f64>) -> Self {
        Self { payload: HistoricalPayload::Summary(data), a0 }
    }

    pub fn glm(data: GlmData, a0: Option<f64>) -> Self {
        Self { payload: HistoricalPayload::Glm(data), a0 }
    }

    pub fn as_summary(&self) -> Option<&TwoGroupSummary> {
        match &self.payload {
            HistoricalPayload::Summary(s) => Some(s),
            HistoricalPayload::Glm(_) => None,
        }
    }

    pub fn as_glm(&self) -> Option<&GlmData> {
        match &self.payload {
            HistoricalPayload::Glm(g) => Some(g),
            HistoricalPayload::Summary(_) => None,
        }
    }
}

/// Initial prior tags. Improper priors are kept as tags; they only ever enter
/// through conjugate update formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialPrior {
    /// Uniform improper prior on a location parameter.
    Flat,
    /// `1/tau` prior on a precision.
    Jeffreys,
    Beta { shape1: f64, shape2: f64 },
    /// Shape/rate parameterization.
    Gamma { shape: f64, rate: f64 },
}

/// Hyperparameters for the initial priors on the arm means and the beta
/// prior on each random a0. For Poisson and exponential data the mean
/// hyperparameters are gamma shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu_t_shape1: f64,
    pub mu_t_shape2: f64,
    pub mu_c_shape1: f64,
    pub mu_c_shape2: f64,
    pub a0_shape1: f64,
    pub a0_shape2: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mu_t_shape1: 1.0,
            mu_t_shape2: 1.0,
            mu_c_shape1: 1.0,
            mu_c_shape2: 1.0,
            a0_shape1: 1.0,
            a0_shape2: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn with_mean_shapes(shape1: f64, shape2: f64) -> Self {
        Self {
            mu_t_shape1: shape1,
            mu_t_shape2: shape2,
            mu_c_shape1: shape1,
            mu_c_shape2: shape2,
            ..Self::default()
        }
    }

    fn mean_prior(family: Family, s1: f64, s2: f64) -> InitialPrior {
        match family {
            Family::Normal => InitialPrior::Flat,
            Family::Bernoulli | Family::Binomial => InitialPrior::Beta { shape1: s1, shape2: s2 },
            Family::Poisson | Family::Exponential => InitialPrior::Gamma { shape: s1, rate: s2 },
        }
    }

    pub fn control_prior(&self, family: Family) -> InitialPrior {
        Self::mean_prior(family, self.mu_c_shape1, self.mu_c_shape2)
    }

    pub fn treatment_prior(&self, family: Family) -> InitialPrior {
        Self::mean_prior(family, self.mu_t_shape1, self.mu_t_shape2)
    }

    pub fn violations(&self, path: &str) -> Vec<Violation> {
        [
            ("mu_t_shape1", self.mu_t_shape1),
            ("mu_t_shape2", self.mu_t_shape2),
            ("mu_c_shape1", self.mu_c_shape1),
            ("mu_c_shape2", self.mu_c_shape2),
            ("a0_shape1", self.a0_shape1),
            ("a0_shape2", self.a0_shape2),
        ]
        .into_iter()
        .filter(|(_, v)| !(*v > 0.0 && v.is_finite()))
        .map(|(name, _)| Violation::new(format!("{path}.{name}"), "hyperparameter must be positive"))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Null boundary: H0 is effect >= delta.
    pub delta: f64,
    /// Posterior probability threshold for rejecting H0.
    pub gamma: f64,
    /// Number of simulated trials.
    pub n_trials: usize,
    pub n_t: Option<u64>,
    pub n_c: Option<u64>,
    pub data_size: Option<usize>,
    pub n_mc: usize,
    pub n_bi: usize,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            delta: 0.0,
            gamma: 0.95,
            n_trials: 10_000,
            n_t: None,
            n_c: None,
            data_size: None,
            n_mc: 10_000,
            n_bi: 250,
        }
    }
}

impl DesignSpec {
    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            out.push(Violation::new(format!("{path}.gamma"), "gamma in [0,1]"));
        }
        if !self.delta.is_finite() {
            out.push(Violation::new(format!("{path}.delta"), "must be finite"));
        }
        if self.n_trials < 1 {
            out.push(Violation::new(format!("{path}.n_trials"), "at least one trial required"));
        }
        if self.n_mc <= self.n_bi {
            out.push(Violation::new(format!("{path}.n_mc"), "n_mc must exceed n_bi"));
        }
        for (name, v) in [("n_t", self.n_t), ("n_c", self.n_c)] {
            if v == Some(0) {
                out.push(Violation::new(format!("{path}.{name}"), "must be positive"));
            }
        }
        if self.data_size == Some(0) {
            out.push(Violation::new(format!("{path}.data_size"), "must be positive"));
        }
        out
    }

    pub fn kept_draws(&self) -> usize {
        self.n_mc.saturating_sub(self.n_bi)
    }
}

/// Discrete approximation of a sampling prior: rows are atoms drawn
/// uniformly with replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPrior {
    pub draws: DMatrix<f64>,
    /// Variance atoms for normal endpoints, paired with `draws` by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_draws: Option<Vec<f64>>,
}

impl SamplingPrior {
    pub fn point(value: f64) -> Self {
        Self { draws: DMatrix::from_element(1, 1, value), variance_draws: None }
    }

    pub fn values(values: &[f64]) -> Self {
        Self { draws: DMatrix::from_column_slice(values.len(), 1, values), variance_draws: None }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self { draws: DMatrix::from_row_slice(rows.len(), ncols, &flat), variance_draws: None }
    }

    pub fn with_variances(mut self, variances: Vec<f64>) -> Self {
        self.variance_draws = Some(variances);
        self
    }

    pub fn atoms(&self) -> usize {
        self.draws.nrows()
    }

    pub fn violations(&self, path: &str, dim: usize, needs_variance: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.draws.nrows() == 0 {
            out.push(Violation::new(format!("{path}.draws"), "at least one atom required"));
        }
        if self.draws.ncols() != dim {
            out.push(Violation::new(
                format!("{path}.draws"),
                format!("expected {dim} columns, found {}", self.draws.ncols()),
            ));
        }
        if self.draws.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new(format!("{path}.draws"), "atoms must be finite"));
        }
        match (&self.variance_draws, needs_variance) {
            (None, true) => out.push(Violation::new(
                format!("{path}.variance_draws"),
                "variance atoms required for normal endpoints",
            )),
            (Some(v), true) => {
                if v.len() != self.draws.nrows() {
                    out.push(Violation::new(
                        format!("{path}.variance_draws"),
                        "must have one variance per atom",
                    ));
                }
                if v.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    out.push(Violation::new(
                        format!("{path}.variance_draws"),
                        "variance draws must be positive",
                    ));
                }
            }
            (Some(_), false) => out.push(Violation::new(
                format!("{path}.variance_draws"),
                "variance atoms only apply to normal endpoints",
            )),
            (None, false) => {}
        }
        out
    }
}

/// Validates a design configuration. Violations are returned as data.
pub fn validate_design_inputs(
    endpoint: &EndpointSpec,
    historical: &[HistoricalSet],
    prior: &PriorSpec,
    design: &DesignSpec,
) -> ValidationReport {
    let mut violations = Vec::new();
    if !endpoint.family.supports(endpoint.link) {
        violations.push(Violation::new(
            "endpoint.link",
            format!("{:?} link is not available for {:?}", endpoint.link, endpoint.family),
        ));
    }
    let mut covariates: Option<usize> = None;
    for (k, set) in historical.iter().enumerate() {
        let path = format!("historical[{k}]");
        if let Some(a0) = set.a0 {
            if !(0.0..=1.0).contains(&a0) {
                violations.push(Violation::new(format!("{path}.a0"), "a0 out of [0,1]"));
            }
        }
        match &set.payload {
            HistoricalPayload::Summary(s) => {
                violations.extend(s.violations(endpoint.family, &path));
            }
            HistoricalPayload::Glm(g) => {
                violations.extend(g.violations(endpoint.family, &path, false));
                match covariates {
                    None => covariates = Some(g.covariates()),
                    Some(p) if p != g.covariates() => violations.push(Violation::new(
                        format!("{path}.x"),
                        format!("has {} covariates, expected {p}", g.covariates()),
                    )),
                    Some(_) => {}
                }
            }
        }
    }
    violations.extend(prior.violations("prior"));
    violations.extend(design.violations("design"));
    ValidationReport { violations }
}

/// Checks that current and historical regression data share a covariate
/// layout (current = treatment column + historical columns).
pub fn validate_glm_layout(current: Option<&GlmData>, historical: &[&GlmData]) -> ValidationReport {
    let mut violations = Vec::new();
    let expected = current.map(|c| c.covariates().saturating_sub(1));
    let expected = expected.or_else(|| historical.first().map(|h| h.covariates()));
    for (k, h) in historical.iter().enumerate() {
        if Some(h.covariates()) != expected {
            violations.push(Violation::new(
                format!("historical[{k}].x"),
                format!(
                    "has {} covariates, expected {} (current minus treatment column)",
                    h.covariates(),
                    expected.unwrap_or(0)
                ),
            ));
        }
    }
    ValidationReport { violations }
}
