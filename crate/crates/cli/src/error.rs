use std::path::Path;

use thiserror::Error;

/// Errors surfaced to the command line, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<sps_core::Error> for CliError {
    fn from(e: sps_core::Error) -> Self {
        match e {
            sps_core::Error::InvalidParameter { .. } | sps_core::Error::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Analysis(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
