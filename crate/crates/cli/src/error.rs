use thiserror::Error;

/// Failure categories; each maps to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Planning(_) => 4,
            CliError::Verification(_) => 5,
            CliError::Internal(_) => 1,
        }
    }
}
