use thiserror::Error;

use crate::model::{Link, Violation};

pub type Result<T, E = PpdError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PpdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("linear predictor {eta} maps outside the mean support under the {link:?} link")]
    LinkDomain { link: Link, eta: f64 },

    #[error("invalid initial point: log density at {x} is {value}")]
    InvalidInitialPoint { x: f64, value: f64 },

    #[error("slice sampler stalled{}", .coordinate.map(|c| format!(" at coordinate {c}")).unwrap_or_default())]
    SliceStalled { coordinate: Option<usize> },

    #[error("degenerate data (zero variance)")]
    DegenerateData,

    #[error("posterior improper: {0}")]
    PosteriorImproper(String),

    #[error("numerical integration did not reach tolerance {tolerance:e}: estimate {estimate}, error estimate {error:e}, {intervals} subintervals")]
    IntegrationFailed {
        estimate: f64,
        error: f64,
        tolerance: f64,
        intervals: usize,
    },

    #[error("degenerate posterior sample: {0}")]
    DegeneratePosteriorSample(String),

    #[error("surface fit failed; enlarge grid or increase nMC (best R^2 {best_r_squared:.5} at degree {degree})")]
    SurfaceFitFailed { best_r_squared: f64, degree: usize },

    #[error("some coefficients not defined because of singularities at degree {degree}; try increasing or decreasing the number of rows in the grid")]
    SurfaceSingular { degree: usize },

    #[error("surface extrapolation: a0[{coordinate}] = {value} outside fitted range [{lower}, {upper}]")]
    SurfaceExtrapolation {
        coordinate: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("Newton-Raphson failed to converge in {excluded} of {trials} trials (limit 5%)")]
    TooManyExcludedTrials { excluded: usize, trials: usize },

    #[error("configuration error: {0}")]
    Configuration(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("{}: {}", v.path, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}
