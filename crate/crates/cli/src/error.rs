use std::path::PathBuf;

use pruned_ntk::NtkError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ntk(#[from] NtkError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("replay produced different output: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Ntk(NtkError::Config(_) | NtkError::Shape { .. } | NtkError::LayerIndex { .. }) => EXIT_USAGE,
            CliError::Ntk(_) | CliError::Mismatch(_) => EXIT_NUMERIC,
            CliError::Io { .. } => EXIT_IO,
            CliError::Csv { source, .. } if source.is_io_error() => EXIT_IO,
            CliError::Csv { .. } => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
