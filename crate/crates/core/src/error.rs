use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
///
/// Per-damage geometric failures (`InsufficientData`, `DegeneratePlane`,
/// `Estimation`) are recoverable in the pipeline: the damage is skipped and
/// the failure recorded in the run summary.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid scene: {0}")]
    Spec(String),
    #[error("{path}: {message}")]
    Ingest { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn ingest(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Ingest {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Whether the pipeline may skip the offending damage instead of aborting.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            Error::InsufficientData(_)
                | Error::DegeneratePlane(_)
                | Error::Estimation(_)
                | Error::DegenerateInput(_)
                | Error::Parameter(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
