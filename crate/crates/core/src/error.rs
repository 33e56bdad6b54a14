//! Crate-wide error type and process exit-code mapping.
//!
//! Shape mismatches and other programmer errors are treated as contract
//! violations and panic via `assert!` at the call site; the variants here
//! cover operator-facing failures that map to exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or violated config invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// Inconsistent or insufficient input data (CSV contents, checkpoint files).
    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    /// Zero pooled variance with unequal means: the t statistic is undefined.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// Non-finite loss, gradient, or parameter during training.
    #[error("training divergence: {0}")]
    Divergence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 configuration, 3 data integrity,
    /// 4 training divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::DataIntegrity(_) | Error::DegenerateVariance(_) => 3,
            Error::Divergence(_) => 4,
            Error::Io { .. } => 1,
        }
    }
}
