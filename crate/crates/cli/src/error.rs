use frodest_core::ErrorKind;
use thiserror::Error;

/// Command failure, carrying the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Model(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<frodest_core::Error> for CliError {
    fn from(e: frodest_core::Error) -> Self {
        match e.kind() {
            ErrorKind::Input | ErrorKind::Io => CliError::Config(e.to_string()),
            ErrorKind::Model => CliError::Model(e.to_string()),
            ErrorKind::Numeric => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("I/O error: {e}"))
    }
}
