//! Errors of the command line runner.

use std::path::PathBuf;

use thiserror::Error;

/// Failures of configuration, orchestration and persistence.
#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration is not valid JSON.
    #[error("config syntax error: {0}")]
    Syntax(String),

    /// A configuration value is missing, unknown or out of range.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A numerical kernel failed.
    #[error(transparent)]
    Core(#[from] nullcone_core::Error),

    /// Reading or writing a file failed.
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    /// Writing a CSV file failed.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Encoding JSON failed.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// The thread pool could not be configured.
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
