use causal_mag::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("learner diverged: {0}")]
    Diverged(String),

    /// Partial output was written before the limit was hit.
    #[error("time limit reached; best-so-far output written to {0}")]
    Timeout(String),

    #[error(transparent)]
    Core(Error),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(Error::InvalidInput(_)) => 2,
            CliError::Diverged(_) | CliError::Core(Error::Diverged(_)) => 3,
            CliError::Timeout(_) => 4,
            _ => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
