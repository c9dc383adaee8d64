use thiserror::Error;
use torusmt_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for non-convergence, 3 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Core(CoreError::NonConvergence { .. }) | CliError::NotConverged(_) => 2,
            _ => 1,
        }
    }
}
