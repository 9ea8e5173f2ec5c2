use std::path::Path;

use thiserror::Error;

/// Failures of a command, each with a stable exit code:
///
/// | code | meaning |
/// |------|---------|
/// | 1 | I/O or internal failure |
/// | 2 | unparsable or invalid input (network, config, flags) |
/// | 3 | no zero-error base code found |
/// | 4 | lifted code `C_G` is empty |
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("no zero-error base code found after {attempts} attempts")]
    NotFound { attempts: usize },
    #[error("{0}")]
    EmptyCode(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::NotFound { .. } => 3,
            CliError::EmptyCode(_) => 4,
            CliError::Io(_) | CliError::Internal(_) => 1,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}
