use sketch_sfa::SfaError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Rendered help or version text; not a failure.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Help(_) => 0,
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<SfaError> for CliError {
    fn from(e: SfaError) -> Self {
        match e.step() {
            Some(step) => CliError::Runtime(format!("[{step}] {}", e.root())),
            None => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
