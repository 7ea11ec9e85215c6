use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config file {path}: {msg}")]
    ConfigFile { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} tracks failed")]
    TracksFailed { failed: usize, total: usize },
    #[error(transparent)]
    Core(#[from] tempokey::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use tempokey::Error as E;
        match self {
            CliError::Usage(_) | CliError::ConfigFile { .. } => EXIT_USAGE,
            CliError::Core(E::Divergence { .. }) => EXIT_DIVERGED,
            CliError::Core(E::Config(_) | E::ConfigMismatch(_)) => EXIT_USAGE,
            CliError::Io { .. } | CliError::TracksFailed { .. } | CliError::Core(_) => EXIT_DATA,
        }
    }
}
