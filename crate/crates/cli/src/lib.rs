//! Experiment plumbing around `polgrad-core`: problem and config files,
//! traced runs written as CSV, empirical rate fits and the acceptance checks.

pub mod checks;
pub mod config;
pub mod presets;
pub mod problem;
pub mod rate_fit;
pub mod runner;
pub mod trace;

use std::path::PathBuf;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "POLGRAD_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    /// Failure inside a run; problem and hyperparameter errors are
    /// reported as [`CliError::Config`] instead.
    #[error("numerical failure: {0}")]
    Numeric(#[from] polgrad_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("trace: {0}")]
    Trace(String),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Json { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } | CliError::Trace(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Problem-construction and validation errors are input errors.
pub(crate) fn invalid(e: polgrad_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
