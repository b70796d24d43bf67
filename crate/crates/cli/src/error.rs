use ppd_core::model::Violation;
use ppd_core::PpdError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration invalid: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("data error: {0}")]
    Data(String),

    #[error("data invalid: {}", join(.0))]
    DataValidation(Vec<Violation>),

    #[error(transparent)]
    Engine(#[from] PpdError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| format!("{}: {}", v.path, v.message)).collect::<Vec<_>>().join("; ")
}

/// Machine-readable error written to standard error.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Validation(_) => "config",
            CliError::Data(_) | CliError::DataValidation(_) => "data",
            CliError::Engine(PpdError::Configuration(_)) => "config",
            CliError::Engine(PpdError::Validation(_)) => "data",
            CliError::Engine(_) => "engine",
            CliError::Io { .. } => "io",
        }
    }

    /// 2 configuration, 3 data, 4 engine, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "data" => 3,
            "engine" => 4,
            _ => 1,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let violations = match self {
            CliError::Validation(v) | CliError::DataValidation(v) | CliError::Engine(PpdError::Validation(v)) => v.clone(),
            _ => Vec::new(),
        };
        ErrorReport { kind: self.kind(), message: self.to_string(), violations }
    }
}
