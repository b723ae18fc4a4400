use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analysis stages.
#[derive(Debug, Error)]
pub enum DcaError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("cannot impute gene '{gene}': every value is missing")]
    Imputation { gene: String },

    #[error("gene '{gene}' has zero variance")]
    ZeroVariance { gene: String },

    #[error("no data left: {0}")]
    EmptyResult(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A statistic is undefined for the given input (constant vectors and the like).
    #[error("undefined statistic: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl DcaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DcaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DcaError>;
