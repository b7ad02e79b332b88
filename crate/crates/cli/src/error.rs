use thiserror::Error;

/// Failures surfaced to the shell, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    MissingArtifact(String),
    #[error("{0}")]
    UnknownCamera(String),
    #[error(transparent)]
    Core(#[from] pgs_core::Error),
}

impl CliError {
    /// 1 usage, 2 config, 3 missing artifacts, 4 bad camera reference,
    /// 5 any other runtime failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::UnknownCamera(_) => 4,
            CliError::Core(_) => 5,
        }
    }
}
