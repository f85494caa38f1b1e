use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dualmenu_core::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checks failed: {0}")]
    ChecksFailed(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use dualmenu_core::Error as E;
        match self {
            CliError::Core(E::AssumptionViolated(_)) => 2,
            CliError::Core(E::InstanceTooLarge { .. }) => 3,
            CliError::ChecksFailed(_) => 4,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
