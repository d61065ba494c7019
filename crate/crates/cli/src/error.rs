use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or parameters; exit code 2.
    #[error("config error: {0}")]
    Config(String),

    /// A verification suite failed; exit code 1.
    #[error("verification failed: {0}")]
    Verify(String),

    /// Anything else that stops a run; exit code 1.
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Verify(_) | CliError::Run(_) => 1,
        }
    }
}

impl From<asgd_core::Error> for CliError {
    fn from(e: asgd_core::Error) -> Self {
        match e {
            asgd_core::Error::NoConvergence { .. } => CliError::Run(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("I/O error: {e}"))
    }
}
