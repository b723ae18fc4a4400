use std::path::PathBuf;

use dca_core::DcaError;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation; usage text is printed with the message.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] DcaError),
}

impl CliError {
    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Output { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                DcaError::InvalidParameter(_) => EXIT_USAGE,
                DcaError::Numeric(_) | DcaError::Degenerate(_) => EXIT_NUMERIC,
                DcaError::Io { .. }
                | DcaError::Parse { .. }
                | DcaError::Validation(_)
                | DcaError::Imputation { .. }
                | DcaError::ZeroVariance { .. }
                | DcaError::EmptyResult(_) => EXIT_DATA,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
