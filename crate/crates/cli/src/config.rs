//! Run configuration: a TOML document with one table per concern.
//!
//! Unknown keys are rejected by name and type mismatches carry the key path.
//! Defaults are filled during parsing, so serializing a parsed config gives
//! its normalized form.

use std::fmt;
use std::str::FromStr;

use ppd_core::mcmc::SliceConfig;
use ppd_core::model::{DesignSpec, PriorSpec, Violation};
use ppd_core::{EndpointSpec, Family, Link};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Analyze,
    Design,
    Normconst,
    FindN,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Design => "design",
            Command::Normconst => "normconst",
            Command::FindN => "find-n",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analyze" => Ok(Command::Analyze),
            "design" => Ok(Command::Design),
            "normconst" => Ok(Command::Normconst),
            "find-n" => Ok(Command::FindN),
            other => Err(CliError::Config(format!("unknown command `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    TwoGroup,
    Glm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum A0ModeConfig {
    #[default]
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    #[serde(default)]
    pub kind: ModelKind,
    pub family: Family,
    /// Canonical link when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link: Option<Link>,
    #[serde(default)]
    pub a0_mode: A0ModeConfig,
}

impl ModelSection {
    pub fn endpoint(&self) -> Result<EndpointSpec, CliError> {
        let link = self.link.unwrap_or(self.family.canonical_link());
        EndpointSpec::new(self.family, link).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Summary statistics (two-group) or a CSV file (regression).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Sample variance, normal data only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoricalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    /// Fixed discounting weight; omitted when a0 is random.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
}

impl HistoricalSection {
    pub fn data(&self) -> DataSection {
        DataSection { y_sum: self.y_sum, n: self.n, v: self.v, csv: self.csv.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSection {
    pub mu_t_shape1: f64,
    pub mu_t_shape2: f64,
    pub mu_c_shape1: f64,
    pub mu_c_shape2: f64,
    pub a0_shape1: f64,
    pub a0_shape2: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = PriorSpec::default();
        Self {
            mu_t_shape1: p.mu_t_shape1,
            mu_t_shape2: p.mu_t_shape2,
            mu_c_shape1: p.mu_c_shape1,
            mu_c_shape2: p.mu_c_shape2,
            a0_shape1: p.a0_shape1,
            a0_shape2: p.a0_shape2,
        }
    }
}

impl PriorSection {
    pub fn spec(&self) -> PriorSpec {
        PriorSpec {
            mu_t_shape1: self.mu_t_shape1,
            mu_t_shape2: self.mu_t_shape2,
            mu_c_shape1: self.mu_c_shape1,
            mu_c_shape2: self.mu_c_shape2,
            a0_shape1: self.a0_shape1,
            a0_shape2: self.a0_shape2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSection {
    pub delta: f64,
    pub gamma: f64,
    pub n_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_t: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_c: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_size: Option<usize>,
    pub n_mc: usize,
    pub n_bi: usize,
    /// Probability that a simulated regression subject is treated.
    pub allocation: f64,
    /// Large-sample approximation instead of MCMC (regression, fixed a0).
    pub approximate: bool,
    /// CSV of covariate rows to resample instead of the historical covariates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_samples: Option<String>,
}

impl Default for DesignSection {
    fn default() -> Self {
        let d = DesignSpec::default();
        Self {
            delta: d.delta,
            gamma: d.gamma,
            n_trials: d.n_trials,
            n_t: None,
            n_c: None,
            data_size: None,
            n_mc: d.n_mc,
            n_bi: d.n_bi,
            allocation: 0.5,
            approximate: false,
            x_samples: None,
        }
    }
}

impl DesignSection {
    pub fn spec(&self) -> DesignSpec {
        DesignSpec {
            delta: self.delta,
            gamma: self.gamma,
            n_trials: self.n_trials,
            n_t: self.n_t,
            n_c: self.n_c,
            data_size: self.data_size,
            n_mc: self.n_mc,
            n_bi: self.n_bi,
        }
    }
}

/// Discrete sampling prior. Two-group designs use `mu_t`/`mu_c` (plus
/// `var_t`/`var_c` for normal data); regression designs use `beta` rows
/// (plus `variance` for normal data).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingPriorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceBounds {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

impl SliceBounds {
    pub fn config(&self) -> Result<SliceConfig, CliError> {
        SliceConfig::new(self.lower, self.upper, self.width).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceSection {
    pub beta: SliceBounds,
    /// One entry per historical set; defaults apply when empty.
    pub a0: Vec<SliceBounds>,
}

impl Default for SliceSection {
    fn default() -> Self {
        Self { beta: SliceBounds { lower: -100.0, upper: 100.0, width: 1.0 }, a0: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormconstSection {
    /// Explicit grid rows of a0 values; a default grid is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<f64>>>,
    pub rings: usize,
    pub n_mc: usize,
    pub n_bi: usize,
    /// Previously fitted surface record to use instead of fitting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
    /// Directory holding fitted surfaces keyed by fingerprint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<String>,
}

impl Default for NormconstSection {
    fn default() -> Self {
        Self { grid: None, rings: ppd_core::normconst::DEFAULT_RINGS, n_mc: 10_000, n_bi: 250, surface: None, cache_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindNSection {
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_alpha1")]
    pub alpha1: f64,
    /// Total sample sizes (two-group) or regression data sizes.
    pub n_grid: Vec<u64>,
    /// Treatment:control ratio used to split two-group totals.
    #[serde(default = "default_ratio")]
    pub treatment_ratio: f64,
}

fn default_alpha0() -> f64 {
    0.05
}

fn default_alpha1() -> f64 {
    0.2
}

fn default_ratio() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    1
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Recode responses to test the opposite direction (two-group
    /// Bernoulli and normal designs).
    #[serde(default)]
    pub flip_responses: bool,
    pub model: ModelSection,
    #[serde(default)]
    pub historical: Vec<HistoricalSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current: Option<DataSection>,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling_prior: Option<SamplingPriorSection>,
    /// Sampling prior with mass in the null space, for `find-n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_sampling_prior: Option<SamplingPriorSection>,
    #[serde(default)]
    pub slice: SliceSection,
    #[serde(default)]
    pub normconst: NormconstSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub find_n: Option<FindNSection>,
}

/// Parses and validates a config. `command` (from the command line) fills
/// in a missing `command` key and must agree with a present one.
pub fn parse_config_with(text: &str, command: Option<Command>) -> Result<RunConfig, CliError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    match (doc.get("command"), command) {
        (None, None) => return Err(CliError::Config("command required".into())),
        (None, Some(c)) => {
            doc.insert("command".into(), toml::Value::String(c.name().into()));
        }
        (Some(v), Some(c)) if v.as_str() != Some(c.name()) => {
            return Err(CliError::Config(format!("config command {v} does not match `{c}`")));
        }
        _ => {}
    }
    let mut non_finite = Vec::new();
    for (key, value) in &doc {
        find_non_finite(value, key, &mut non_finite);
    }
    if !non_finite.is_empty() {
        return Err(CliError::Config(format!("non-finite numbers at {}", non_finite.join(", "))));
    }
    if !doc.contains_key("model") {
        return Err(CliError::Config("model required".into()));
    }
    let mut unknown = Vec::new();
    let mut record = |path: serde_ignored::Path<'_>| unknown.push(path.to_string());
    let de = serde_ignored::Deserializer::new(toml::Value::Table(doc), &mut record);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    Ok(config)
}

fn find_non_finite(value: &toml::Value, path: &str, out: &mut Vec<String>) {
    match value {
        toml::Value::Float(f) if !f.is_finite() => out.push(path.to_string()),
        toml::Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                find_non_finite(v, &format!("{path}[{i}]"), out);
            }
        }
        toml::Value::Table(t) => {
            for (k, v) in t {
                find_non_finite(v, &format!("{path}.{k}"), out);
            }
        }
        _ => {}
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    parse_config_with(text, None)
}

fn check(out: &mut Vec<Violation>, ok: bool, path: impl Into<String>, message: &str) {
    if !ok {
        out.push(Violation::new(path, message));
    }
}

impl RunConfig {
    pub fn endpoint(&self) -> Result<EndpointSpec, CliError> {
        self.model.endpoint()
    }

    pub fn is_glm(&self) -> bool {
        self.model.kind == ModelKind::Glm
    }

    /// Structural validation; data-level checks happen at ingest.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let family = self.model.family;
        if let Err(e) = self.model.endpoint() {
            out.push(Violation::new("model.link", e.to_string()));
        }
        if self.model.kind == ModelKind::TwoGroup && self.model.link.is_some_and(|l| l != family.canonical_link()) {
            out.push(Violation::new("model.link", "two-group models use the canonical link"));
        }
        if self.model.kind == ModelKind::TwoGroup && family == Family::Binomial {
            out.push(Violation::new("model.family", "two-group binary data use the bernoulli family"));
        }
        check(&mut out, self.workers >= 1, "workers", "must be at least 1");
        let d = &self.design;
        check(&mut out, d.gamma > 0.0 && d.gamma < 1.0, "design.gamma", "gamma in (0,1)");
        check(&mut out, d.delta.is_finite(), "design.delta", "must be finite");
        check(&mut out, d.n_trials >= 1, "design.n_trials", "at least one trial required");
        check(&mut out, d.n_mc > d.n_bi, "design.n_mc", "n_mc must exceed n_bi");
        check(&mut out, d.allocation > 0.0 && d.allocation < 1.0, "design.allocation", "allocation in (0,1)");
        out.extend(self.prior.spec().violations("prior"));
        let nc = &self.normconst;
        check(&mut out, nc.n_mc > nc.n_bi, "normconst.n_mc", "n_mc must exceed n_bi");
        check(&mut out, nc.rings >= 1, "normconst.rings", "must be at least 1");
        if let Err(e) = self.slice.beta.config() {
            out.push(Violation::new("slice.beta", e.to_string()));
        }
        for (i, s) in self.slice.a0.iter().enumerate() {
            if s.config().is_err() || s.lower < 0.0 || s.upper > 1.0 {
                out.push(Violation::new(format!("slice.a0[{i}]"), "need 0 <= lower < upper <= 1 and width > 0"));
            }
        }
        if !self.slice.a0.is_empty() && self.slice.a0.len() != self.historical.len() {
            out.push(Violation::new("slice.a0", "one entry per historical set"));
        }

        let fixed = self.model.a0_mode == A0ModeConfig::Fixed;
        for (k, h) in self.historical.iter().enumerate() {
            let path = format!("historical[{k}]");
            match (fixed, h.a0) {
                (true, None) => out.push(Violation::new(format!("{path}.a0"), "fixed a0 mode needs a0")),
                (true, Some(a)) => check(&mut out, (0.0..=1.0).contains(&a), format!("{path}.a0"), "a0 in [0,1]"),
                (false, Some(_)) => out.push(Violation::new(format!("{path}.a0"), "a0 is sampled in random a0 mode")),
                (false, None) => {}
            }
            self.data_violations(&h.data(), &path, &mut out);
        }
        if let Some(c) = &self.current {
            self.data_violations(c, "current", &mut out);
        }
        if self.model.a0_mode == A0ModeConfig::Random && self.historical.is_empty() {
            out.push(Violation::new("historical", "random a0 needs at least one historical set"));
        }

        match self.command {
            Command::Analyze => {
                if !self.is_glm() && self.current.is_none() {
                    out.push(Violation::new("current", "two-group analysis needs current control data"));
                }
                if self.current.is_none() && self.historical.is_empty() {
                    out.push(Violation::new("current", "no data to analyze"));
                }
                if self.is_glm() && self.current.is_none() && !fixed {
                    out.push(Violation::new("current", "sampling the power prior needs fixed a0"));
                }
            }
            Command::Design => {
                match &self.sampling_prior {
                    None => out.push(Violation::new("sampling_prior", "design needs a sampling prior")),
                    Some(s) => self.sampling_violations(s, "sampling_prior", &mut out),
                }
                self.size_violations(false, &mut out);
            }
            Command::Normconst => {
                check(&mut out, self.is_glm(), "model.kind", "normconst applies to regression models");
                check(&mut out, !self.historical.is_empty(), "historical", "normconst needs historical data");
            }
            Command::FindN => {
                for (name, p) in [("sampling_prior", &self.sampling_prior), ("null_sampling_prior", &self.null_sampling_prior)]
                {
                    match p {
                        None => out.push(Violation::new(name, "find-n needs null and alternative sampling priors")),
                        Some(s) => self.sampling_violations(s, name, &mut out),
                    }
                }
                match &self.find_n {
                    None => out.push(Violation::new("find_n", "find-n needs a [find_n] section")),
                    Some(f) => {
                        check(&mut out, (0.0..=1.0).contains(&f.alpha0), "find_n.alpha0", "alpha0 in [0,1]");
                        check(&mut out, (0.0..=1.0).contains(&f.alpha1), "find_n.alpha1", "alpha1 in [0,1]");
                        check(
                            &mut out,
                            !f.n_grid.is_empty() && f.n_grid.windows(2).all(|w| w[0] < w[1]),
                            "find_n.n_grid",
                            "must be nonempty and increasing",
                        );
                        check(
                            &mut out,
                            f.treatment_ratio > 0.0 && f.treatment_ratio.is_finite(),
                            "find_n.treatment_ratio",
                            "must be positive",
                        );
                        if !self.is_glm() {
                            let min_arm = if family == Family::Normal { 2 } else { 1 };
                            for &n in &f.n_grid {
                                let (t, c) = ppd_core::design::split_sample_size(n, f.treatment_ratio);
                                if t < min_arm || c < min_arm {
                                    out.push(Violation::new("find_n.n_grid", format!("{n} leaves an arm too small")));
                                }
                            }
                        }
                    }
                }
                self.size_violations(true, &mut out);
            }
        }
        if self.flip_responses {
            check(
                &mut out,
                !self.is_glm() && matches!(family, Family::Bernoulli | Family::Normal),
                "flip_responses",
                "flip-responses supports two-group bernoulli and normal models",
            );
            check(
                &mut out,
                matches!(self.command, Command::Design | Command::FindN),
                "flip_responses",
                "flip-responses applies to design and find-n",
            );
        }
        if self.design.approximate {
            check(&mut out, self.is_glm(), "design.approximate", "the approximation applies to regression models");
            check(&mut out, fixed, "design.approximate", "the approximation requires fixed a0");
        }
        out
    }

    fn data_violations(&self, d: &DataSection, path: &str, out: &mut Vec<Violation>) {
        if self.is_glm() {
            check(out, d.csv.is_some(), format!("{path}.csv"), "regression data come from a CSV file");
            check(
                out,
                d.y_sum.is_none() && d.n.is_none() && d.v.is_none(),
                path,
                "regression data take no summary statistics",
            );
        } else {
            check(out, d.csv.is_none(), format!("{path}.csv"), "two-group data are summary statistics");
            check(out, d.y_sum.is_some(), format!("{path}.y_sum"), "required");
            check(out, d.n.is_some_and(|n| n > 0), format!("{path}.n"), "required and positive");
            if self.model.family == Family::Normal {
                check(out, d.v.is_some(), format!("{path}.v"), "normal data need a sample variance");
            } else {
                check(out, d.v.is_none(), format!("{path}.v"), "only normal data take a variance");
            }
        }
    }

    fn sampling_violations(&self, s: &SamplingPriorSection, path: &str, out: &mut Vec<Violation>) {
        let normal = self.model.family == Family::Normal;
        if self.is_glm() {
            check(out, s.beta.as_ref().is_some_and(|b| !b.is_empty()), format!("{path}.beta"), "required");
            check(out, s.mu_t.is_none() && s.mu_c.is_none(), path, "regression designs take beta rows");
            if normal {
                check(out, s.variance.is_some(), format!("{path}.variance"), "normal data need variances");
            }
        } else {
            for (name, v) in [("mu_t", &s.mu_t), ("mu_c", &s.mu_c)] {
                check(out, v.as_ref().is_some_and(|v| !v.is_empty()), format!("{path}.{name}"), "required");
            }
            check(out, s.beta.is_none(), format!("{path}.beta"), "two-group designs take mu_t and mu_c");
            if normal {
                check(out, s.var_t.is_some() && s.var_c.is_some(), path, "normal data need var_t and var_c");
            }
        }
    }

    fn size_violations(&self, searching: bool, out: &mut Vec<Violation>) {
        let d = &self.design;
        if self.is_glm() {
            check(out, searching || d.data_size.is_some_and(|n| n > 0), "design.data_size", "required and positive");
            check(out, d.x_samples.is_some() || !self.historical.is_empty(), "design.x_samples", "covariates need historical data or x_samples");
        } else if !searching {
            check(out, d.n_t.is_some_and(|n| n > 0), "design.n_t", "required and positive");
            check(out, d.n_c.is_some_and(|n| n > 0), "design.n_c", "required and positive");
        }
    }

    /// Normalized TOML text, suitable for re-parsing.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
