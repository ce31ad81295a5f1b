use std::path::Path;

use liftseg_core::SegError;
use thiserror::Error;

/// Failure of a run, grouped by the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<SegError> for CliError {
    fn from(e: SegError) -> Self {
        match e {
            SegError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
