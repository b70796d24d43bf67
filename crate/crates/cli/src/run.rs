//! Dispatches a parsed config to the engines and assembles the report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use ppd_core::design::{
    find_sample_size, power_glm, power_glm_approx, power_two_group, split_sample_size, A0Mode, CovariateSource,
    Execution, GlmSimulation, OperatingCharacteristic,
};
use ppd_core::glm::{fit_glm_fixed_a0, fit_glm_random_a0, GlmPosterior, LogNormalizer, McmcSettings};
use ppd_core::mcmc::SliceConfig;
use ppd_core::model::{DesignSpec, GlmData, HistoricalSet, PriorSpec, SamplingPrior, TwoGroupSummary};
use ppd_core::normconst::{fit_surface, A0Grid, PolySurface};
use ppd_core::two_group::{fit_fixed_a0, fit_random_a0, TwoGroupPosterior};
use ppd_core::{EndpointSpec, Family, RngStream};
use serde::Serialize;
use serde_json::json;

use crate::config::{A0ModeConfig, Command, DataSection, RunConfig, SamplingPriorSection};
use crate::error::CliError;
use crate::ingest::{read_csv, CsvRole};
use crate::report::{fingerprint, sha256_hex, DataFile, RunReport, Timings};

/// Command-line settings that sit outside the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<String>,
    pub flip_responses: bool,
    pub quiet: bool,
}

impl RunOptions {
    /// Folds command-line overrides into the config and revalidates.
    pub fn apply(&self, mut config: RunConfig) -> Result<RunConfig, CliError> {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(w) = self.workers {
            config.workers = w;
        }
        if let Some(o) = &self.output {
            config.output = Some(o.clone());
        }
        config.flip_responses |= self.flip_responses;
        let violations = config.violations();
        if !violations.is_empty() {
            return Err(CliError::Validation(violations));
        }
        Ok(config)
    }
}

// Stream ids under the master stream, one per phase.
const ANALYZE_STREAM: u64 = 0;
const DESIGN_STREAM: u64 = 1;
const SURFACE_STREAM: u64 = 2;
const NULL_STREAM: u64 = 3;
const ALT_STREAM: u64 = 4;
/// The default a0 grid does not depend on the run seed, so surfaces cached
/// under one seed are found by runs with another.
const GRID_STREAM: RngStream = RngStream { seed: 0x5eed, stream_id: 0 };

/// Loaded data for one run.
struct Inputs {
    endpoint: EndpointSpec,
    historical: Vec<HistoricalSet>,
    current_summary: Option<TwoGroupSummary>,
    current_glm: Option<GlmData>,
    /// Coefficient names in posterior column order.
    coefficient_names: Vec<String>,
    x_samples: Option<DMatrix<f64>>,
    files: Vec<DataFile>,
}

struct Context<'a> {
    config: &'a RunConfig,
    base_dir: &'a Path,
    inputs: Inputs,
    master: RngStream,
    exec: Execution,
}

fn resolve(base_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn summary_of(d: &DataSection) -> TwoGroupSummary {
    TwoGroupSummary { y_sum: d.y_sum.unwrap_or(0.0), n: d.n.unwrap_or(0), v: d.v }
}

/// Recodes a Bernoulli (`y -> n - y`) or normal (`y -> -y`) summary.
fn flip_summary(family: Family, s: TwoGroupSummary) -> TwoGroupSummary {
    match family {
        Family::Bernoulli => TwoGroupSummary { y_sum: s.n as f64 - s.y_sum, ..s },
        _ => TwoGroupSummary { y_sum: -s.y_sum, ..s },
    }
}

fn flip_mean(family: Family, mu: f64) -> f64 {
    match family {
        Family::Bernoulli => 1.0 - mu,
        _ => -mu,
    }
}

fn load_inputs(config: &RunConfig, base_dir: &Path) -> Result<Inputs, CliError> {
    let endpoint = config.endpoint()?;
    let family = endpoint.family;
    let flip = config.flip_responses;
    let fixed = config.model.a0_mode == A0ModeConfig::Fixed;
    let mut files = Vec::new();
    let mut read = |path: &str, role: CsvRole| -> Result<crate::ingest::Ingested, CliError> {
        let full = resolve(base_dir, path);
        let bytes = std::fs::read(&full).map_err(|e| CliError::io(format!("reading {}", full.display()), e))?;
        files.push(DataFile { path: path.to_string(), sha256: sha256_hex(&bytes) });
        read_csv(&full, role, family)
    };

    if !config.is_glm() {
        let mut violations = Vec::new();
        let mut historical = Vec::new();
        for (k, h) in config.historical.iter().enumerate() {
            let s = summary_of(&h.data());
            violations.extend(s.violations(family, &format!("historical[{k}]")));
            let s = if flip { flip_summary(family, s) } else { s };
            historical.push(HistoricalSet::summary(s, if fixed { h.a0 } else { None }));
        }
        let current_summary = config.current.as_ref().map(|c| {
            let s = summary_of(c);
            violations.extend(s.violations(family, "current"));
            s
        });
        if !violations.is_empty() {
            return Err(CliError::DataValidation(violations));
        }
        return Ok(Inputs {
            endpoint,
            historical,
            current_summary,
            current_glm: None,
            coefficient_names: Vec::new(),
            x_samples: None,
            files,
        });
    }

    let mut historical = Vec::new();
    let mut hist_names: Option<Vec<String>> = None;
    for (k, h) in config.historical.iter().enumerate() {
        let path = h.csv.as_deref().expect("validated");
        let got = read(path, CsvRole::Historical)?;
        match &hist_names {
            Some(names) if *names != got.covariates => {
                return Err(CliError::Data(format!(
                    "historical[{k}] covariates {:?} differ from historical[0] {:?}",
                    got.covariates, names
                )))
            }
            None => hist_names = Some(got.covariates.clone()),
            _ => {}
        }
        historical.push(HistoricalSet::glm(got.data, if fixed { h.a0 } else { None }));
    }
    let current = match &config.current {
        Some(c) => Some(read(c.csv.as_deref().expect("validated"), CsvRole::Current)?),
        None => None,
    };
    if let (Some(c), Some(h)) = (&current, &hist_names) {
        if c.covariates[1..] != h[..] {
            return Err(CliError::Data(format!(
                "current covariates {:?} (after `treat`) differ from historical {:?}",
                &c.covariates[1..],
                h
            )));
        }
    }
    let x_samples = match (&config.design.x_samples, config.command) {
        (Some(path), Command::Design | Command::FindN) => {
            let got = read(path, CsvRole::Covariates)?;
            let expected = hist_names.clone().or_else(|| current.as_ref().map(|c| c.covariates[1..].to_vec()));
            if let Some(names) = expected {
                if names != got.covariates {
                    return Err(CliError::Data(format!(
                        "x_samples columns {:?} differ from the model covariates {names:?}",
                        got.covariates
                    )));
                }
            }
            Some(got.data.x)
        }
        _ => None,
    };
    let mut coefficient_names = vec!["intercept".to_string()];
    match (&current, &hist_names) {
        (Some(c), _) => coefficient_names.extend(c.covariates.iter().cloned()),
        (None, Some(h)) => coefficient_names.extend(h.iter().cloned()),
        (None, None) => {}
    }
    Ok(Inputs {
        endpoint,
        historical,
        current_summary: None,
        current_glm: current.map(|c| c.data),
        coefficient_names,
        x_samples,
        files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Type 7 sample quantile (linear interpolation).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_draws(name: impl Into<String>, draws: impl IntoIterator<Item = f64>) -> ParameterSummary {
    let mut v: Vec<f64> = draws.into_iter().collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    v.sort_by(f64::total_cmp);
    ParameterSummary { name: name.into(), mean, sd, q025: quantile(&v, 0.025), q975: quantile(&v, 0.975) }
}

fn matrix_summaries(out: &mut Vec<ParameterSummary>, prefix: &str, m: &DMatrix<f64>) {
    for j in 0..m.ncols() {
        let name = if m.ncols() == 1 && prefix == "tau" { prefix.to_string() } else { format!("{prefix}[{j}]") };
        out.push(summarize_draws(name, m.column(j).iter().copied()));
    }
}

impl Context<'_> {
    fn prior(&self) -> PriorSpec {
        let mut p = self.config.prior.spec();
        if self.config.flip_responses && self.inputs.endpoint.family == Family::Bernoulli {
            std::mem::swap(&mut p.mu_t_shape1, &mut p.mu_t_shape2);
            std::mem::swap(&mut p.mu_c_shape1, &mut p.mu_c_shape2);
        }
        p
    }

    fn design(&self) -> DesignSpec {
        let mut d = self.config.design.spec();
        if self.config.flip_responses {
            d.delta = -d.delta;
        }
        d
    }

    fn a0_mode(&self) -> A0Mode {
        match self.config.model.a0_mode {
            A0ModeConfig::Fixed => A0Mode::Fixed,
            A0ModeConfig::Random => A0Mode::Random,
        }
    }

    fn a0_slices(&self) -> Result<Vec<SliceConfig>, CliError> {
        self.config.slice.a0.iter().map(|s| s.config()).collect()
    }

    fn mcmc_settings(&self, n_mc: usize, n_bi: usize) -> Result<McmcSettings, CliError> {
        Ok(McmcSettings { n_mc, n_bi, beta_slice: self.config.slice.beta.config()?, a0_slice: self.a0_slices()? })
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.exec.workers)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))
    }

    fn historical_glm(&self) -> Vec<&GlmData> {
        self.inputs.historical.iter().filter_map(HistoricalSet::as_glm).collect()
    }

    fn grid(&self) -> Result<A0Grid, CliError> {
        match &self.config.normconst.grid {
            Some(rows) => {
                let k = self.inputs.historical.len();
                if rows.is_empty() || rows.iter().any(|r| r.len() != k) {
                    return Err(CliError::Config(format!("normconst.grid rows need {k} entries each")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(A0Grid::new(DMatrix::from_row_slice(rows.len(), k, &flat)).map_err(|e| CliError::Config(e.to_string()))?)
            }
            None => Ok(A0Grid::default_for(self.inputs.historical.len(), &GRID_STREAM)?),
        }
    }

    /// Key for cached surfaces: the endpoint, the historical data, and the
    /// settings that shape the estimate.
    fn surface_fingerprint(&self, grid: &A0Grid) -> String {
        let nc = &self.config.normconst;
        let key = json!({
            "endpoint": [self.inputs.endpoint.family.name(), self.inputs.endpoint.link.name()],
            "historical": self.historical_glm(),
            "grid": grid.rows.as_slice(),
            "grid_shape": [grid.rows.nrows(), grid.rows.ncols()],
            "rings": nc.rings,
            "n_mc": nc.n_mc,
            "n_bi": nc.n_bi,
            "beta_slice": self.config.slice.beta,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    fn fit_surface_now(&self, grid: &A0Grid, fp: &str) -> Result<(PolySurface, Vec<f64>), CliError> {
        let nc = &self.config.normconst;
        let settings = self.mcmc_settings(nc.n_mc, nc.n_bi)?;
        let stream = self.master.child(SURFACE_STREAM);
        let hist = self.historical_glm();
        let endpoint = self.inputs.endpoint;
        Ok(self.pool()?.install(|| fit_surface(&endpoint, &hist, grid, &settings, nc.rings, fp, &stream))?)
    }

    fn cache_path(&self, fp: &str) -> Option<PathBuf> {
        self.config.normconst.cache_dir.as_ref().map(|d| resolve(self.base_dir, d).join(format!("{fp}.surface")))
    }

    fn store(&self, surface: &PolySurface, fp: &str) -> Result<Option<PathBuf>, CliError> {
        let Some(path) = self.cache_path(fp) else { return Ok(None) };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        }
        crate::report::write_atomic(&path, &surface.to_text())?;
        Ok(Some(path))
    }

    /// Surface for random-a0 regression: an explicit record, a cache hit,
    /// or a fresh fit (stored when a cache directory is configured).
    fn surface(&self) -> Result<Option<PolySurface>, CliError> {
        if !self.config.is_glm() || self.config.model.a0_mode != A0ModeConfig::Random {
            return Ok(None);
        }
        let nc = &self.config.normconst;
        if let Some(path) = &nc.surface {
            let full = resolve(self.base_dir, path);
            let text = std::fs::read_to_string(&full).map_err(|e| CliError::io(format!("reading {}", full.display()), e))?;
            let s = PolySurface::from_text(&text).map_err(|e| CliError::Data(format!("{}: {e}", full.display())))?;
            self.check_surface(&s)?;
            return Ok(Some(s));
        }
        if self.inputs.endpoint.family == Family::Normal {
            return Ok(None);
        }
        let grid = self.grid()?;
        let fp = self.surface_fingerprint(&grid);
        if let Some(path) = self.cache_path(&fp) {
            if let Ok(text) = std::fs::read_to_string(&path) {
                let s = PolySurface::from_text(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                log::info!("using cached surface {}", path.display());
                self.check_surface(&s)?;
                return Ok(Some(s));
            }
        }
        log::info!("fitting normalizing-constant surface over {} grid points", grid.len());
        let (s, _) = self.fit_surface_now(&grid, &fp)?;
        self.store(&s, &fp)?;
        Ok(Some(s))
    }

    fn check_surface(&self, s: &PolySurface) -> Result<(), CliError> {
        if s.endpoint != self.inputs.endpoint {
            return Err(CliError::Config("surface was fitted for a different endpoint".into()));
        }
        if s.dims() != self.inputs.historical.len() {
            return Err(CliError::Config(format!(
                "surface has {} dimensions for {} historical sets",
                s.dims(),
                self.inputs.historical.len()
            )));
        }
        Ok(())
    }

    fn analyze(&self) -> Result<serde_json::Value, CliError> {
        let d = &self.config.design;
        let mut rng = self.master.child(ANALYZE_STREAM).rng();
        let endpoint = &self.inputs.endpoint;
        let prior = self.prior();
        let mut params = Vec::new();
        if !self.config.is_glm() {
            let current = self.inputs.current_summary.as_ref().expect("validated");
            let post: TwoGroupPosterior = match self.a0_mode() {
                A0Mode::Fixed => fit_fixed_a0(endpoint, current, &self.inputs.historical, &prior, d.n_mc, d.n_bi, &mut rng)?,
                A0Mode::Random => fit_random_a0(
                    endpoint,
                    current,
                    &self.inputs.historical,
                    &prior,
                    &self.a0_slices()?,
                    d.n_mc,
                    d.n_bi,
                    &mut rng,
                )?,
            };
            match &post.conjugate {
                Some(c) => params.push(ParameterSummary {
                    name: "mu_c".into(),
                    mean: c.mean(),
                    sd: c.sd(),
                    q025: c.quantile(0.025),
                    q975: c.quantile(0.975),
                }),
                None => params.push(summarize_draws("mu_c", post.mu_c_draws.iter().copied())),
            }
            if let Some(t) = &post.tau_draws {
                matrix_summaries(&mut params, "tau", t);
            }
            if let Some(a) = &post.a0_draws {
                matrix_summaries(&mut params, "a0", a);
            }
            return Ok(json!({ "model": "two-group", "exact": post.conjugate.is_some(), "parameters": params }));
        }
        let settings = self.mcmc_settings(d.n_mc, d.n_bi)?;
        let current = self.inputs.current_glm.as_ref();
        let post: GlmPosterior = match self.a0_mode() {
            A0Mode::Fixed => fit_glm_fixed_a0(endpoint, current, &self.inputs.historical, &settings, &mut rng)?,
            A0Mode::Random => {
                let surface = self.surface()?;
                let normalizer = match &surface {
                    Some(s) => LogNormalizer::Surface(s),
                    None => LogNormalizer::NormalAnalytic,
                };
                fit_glm_random_a0(endpoint, current, &self.inputs.historical, &prior, normalizer, &settings, &mut rng)?
            }
        };
        for (j, name) in self.inputs.coefficient_names.iter().enumerate() {
            params.push(summarize_draws(name.clone(), post.beta_draws.column(j).iter().copied()));
        }
        if let Some(t) = &post.tau_draws {
            matrix_summaries(&mut params, "tau", t);
        }
        if let Some(a) = &post.a0_draws {
            matrix_summaries(&mut params, "a0", a);
        }
        Ok(json!({
            "model": "glm",
            "includes_current": current.is_some(),
            "draws": post.beta_draws.nrows(),
            "parameters": params,
        }))
    }

    fn two_group_priors(&self, s: &SamplingPriorSection) -> (SamplingPrior, SamplingPrior) {
        let family = self.inputs.endpoint.family;
        let recode = |v: &Vec<f64>| -> Vec<f64> {
            if self.config.flip_responses {
                v.iter().map(|&m| flip_mean(family, m)).collect()
            } else {
                v.clone()
            }
        };
        let mut t = SamplingPrior::values(&recode(s.mu_t.as_ref().expect("validated")));
        let mut c = SamplingPrior::values(&recode(s.mu_c.as_ref().expect("validated")));
        if let Some(v) = &s.var_t {
            t = t.with_variances(v.clone());
        }
        if let Some(v) = &s.var_c {
            c = c.with_variances(v.clone());
        }
        (t, c)
    }

    fn glm_prior(&self, s: &SamplingPriorSection) -> Result<SamplingPrior, CliError> {
        let rows = s.beta.as_ref().expect("validated");
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(CliError::Config("sampling prior beta rows differ in length".into()));
        }
        let mut p = SamplingPrior::from_rows(rows);
        if let Some(v) = &s.variance {
            p = p.with_variances(v.clone());
        }
        Ok(p)
    }

    /// One operating characteristic under the given sampling prior.
    fn evaluate(
        &self,
        s: &SamplingPriorSection,
        design: &DesignSpec,
        stream: &RngStream,
        surface: Option<&PolySurface>,
    ) -> Result<OperatingCharacteristic, CliError> {
        let endpoint = &self.inputs.endpoint;
        if !self.config.is_glm() {
            let (t, c) = self.two_group_priors(s);
            return Ok(power_two_group(
                endpoint,
                design,
                &self.inputs.historical,
                &self.prior(),
                &t,
                &c,
                self.a0_mode(),
                &self.a0_slices()?,
                stream,
                &self.exec,
            )?);
        }
        let samp = self.glm_prior(s)?;
        let sim = GlmSimulation {
            covariates: match &self.inputs.x_samples {
                Some(x) => CovariateSource::Samples(x.clone()),
                None => CovariateSource::Historical,
            },
            allocation: self.config.design.allocation,
        };
        if self.config.design.approximate {
            return Ok(power_glm_approx(endpoint, design, &self.inputs.historical, &samp, &sim, stream, &self.exec)?);
        }
        let settings = self.mcmc_settings(design.n_mc, design.n_bi)?;
        Ok(power_glm(
            endpoint,
            design,
            &self.inputs.historical,
            &self.prior(),
            &samp,
            &sim,
            self.a0_mode(),
            surface,
            &settings,
            stream,
            &self.exec,
        )?)
    }

    fn design_run(&self) -> Result<serde_json::Value, CliError> {
        let surface = self.surface()?;
        let s = self.config.sampling_prior.as_ref().expect("validated");
        let oc = self.evaluate(s, &self.design(), &self.master.child(DESIGN_STREAM), surface.as_ref())?;
        let mut out = json!({ "operating_characteristic": oc });
        if self.config.is_glm() {
            out["coefficient_names"] = json!(self.inputs.coefficient_names);
        }
        Ok(out)
    }

    fn find_n(&self) -> Result<serde_json::Value, CliError> {
        let f = self.config.find_n.as_ref().expect("validated");
        let surface = self.surface()?;
        let null = self.config.null_sampling_prior.as_ref().expect("validated");
        let alt = self.config.sampling_prior.as_ref().expect("validated");
        let base = self.design();
        let glm = self.config.is_glm();
        // The same streams at every n: common random numbers along the grid.
        let mut failure: Option<CliError> = None;
        let evaluate = |n: u64| {
            let mut d = base.clone();
            if glm {
                d.data_size = Some(n as usize);
            } else {
                let (t, c) = split_sample_size(n, f.treatment_ratio);
                d.n_t = Some(t);
                d.n_c = Some(c);
            }
            let type_i = self.evaluate(null, &d, &self.master.child(NULL_STREAM), surface.as_ref())?;
            let power = self.evaluate(alt, &d, &self.master.child(ALT_STREAM), surface.as_ref())?;
            Ok((type_i, power))
        };
        let result = find_sample_size(
            |n| {
                evaluate(n).map_err(|e: CliError| {
                    let message = e.to_string();
                    failure = Some(e);
                    ppd_core::PpdError::InvalidInput(message)
                })
            },
            f.alpha0,
            f.alpha1,
            &f.n_grid,
        );
        let table = match (result, failure) {
            (Ok(t), _) => t,
            (Err(_), Some(e)) => return Err(e),
            (Err(e), None) => return Err(e.into()),
        };
        Ok(json!({ "sample_size": table }))
    }

    fn normconst(&self) -> Result<serde_json::Value, CliError> {
        let grid = self.grid()?;
        let fp = self.surface_fingerprint(&grid);
        let (surface, values) = self.fit_surface_now(&grid, &fp)?;
        let cached = self.store(&surface, &fp)?;
        let rows: Vec<serde_json::Value> = (0..grid.len())
            .map(|i| json!({ "a0": grid.row(i), "log_c": values[i], "fitted": surface.eval(&grid.row(i)).ok() }))
            .collect();
        Ok(json!({
            "fingerprint": fp,
            "degree": surface.degree,
            "r_squared": surface.r_squared,
            "hull": surface.hull(),
            "grid": rows,
            "record": surface.to_text(),
            "cache_file": cached.map(|p| p.display().to_string()),
        }))
    }
}

/// Runs a validated config. Relative data paths resolve against `base_dir`.
pub fn run(config: &RunConfig, base_dir: &Path, quiet: bool) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let inputs = load_inputs(config, base_dir)?;
    let ingest_seconds = start.elapsed().as_secs_f64();
    let files = inputs.files.clone();
    let ctx = Context {
        config,
        base_dir,
        inputs,
        master: RngStream::new(config.seed, 0),
        exec: Execution { workers: config.workers, progress: !quiet },
    };
    let compute = Instant::now();
    let results = match config.command {
        Command::Analyze => ctx.pool()?.install(|| ctx.analyze())?,
        Command::Design => ctx.design_run()?,
        Command::Normconst => ctx.normconst()?,
        Command::FindN => ctx.find_n()?,
    };
    let compute_seconds = compute.elapsed().as_secs_f64();
    Ok(RunReport {
        version: env!("CARGO_PKG_VERSION"),
        command: config.command.name().to_string(),
        seed: config.seed,
        workers: config.workers,
        fingerprint: fingerprint(config, &files),
        config: config.clone(),
        data_files: files,
        results,
        timings: Timings { ingest_seconds, compute_seconds, total_seconds: start.elapsed().as_secs_f64() },
    })
}

/// Parses a config file, applies overrides, runs it, and writes the report
/// when an output path is set. Returns the report.
pub fn run_file(path: &Path, command: Option<Command>, options: &RunOptions) -> Result<RunReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let config = crate::config::parse_config_with(&text, command)?;
    let config = options.apply(config)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let report = run(&config, &base_dir, options.quiet)?;
    if let Some(out) = &config.output {
        crate::report::write_atomic(&resolve(&base_dir, out), &report.to_json())?;
    }
    Ok(report)
}
