use std::io;
use std::path::PathBuf;

use gatetrim_core::Error as CoreError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const OPTIMIZER: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("precondition failed: {0}")]
    Precondition(CoreError),
    #[error("optimizer failed: {0}")]
    Optimizer(CoreError),
    #[error(transparent)]
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Precondition(_) => exit::PRECONDITION,
            CliError::Optimizer(_) => exit::OPTIMIZER,
            _ => exit::INPUT,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.into(), line, message: message.into() }
    }

    /// Classifies an error raised while validating inputs: a non-unitary
    /// matrix is a failed precondition, anything else is bad input.
    pub fn from_input(e: CoreError) -> Self {
        match e {
            CoreError::NotUnitary { .. } => CliError::Precondition(e),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
