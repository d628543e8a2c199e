//! One error type per exit code, and the mappings from library errors.

use lookaround::autodiff::CheckpointError;
use lookaround::completer::CompleterError;
use lookaround::evalsuite::EvalError;
use lookaround::gridworld::GridError;
use lookaround::trainer::TrainerError;
use thiserror::Error;

/// Everything a command can fail with, bucketed by exit code: bad requests
/// (2), operating-system I/O (3), and malformed or mismatched data (4).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Format(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<CompleterError> for CliError {
    fn from(e: CompleterError) -> Self {
        match e {
            CompleterError::Grid(g) => g.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<TrainerError> for CliError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::Log(io) => CliError::Io(io.to_string()),
            TrainerError::Checkpoint(c) => c.into(),
            TrainerError::Grid(g) => g.into(),
            TrainerError::Completer(c) => c.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadRequest(msg) => CliError::Usage(msg),
            EvalError::Grid(g) => g.into(),
            EvalError::Completer(c) => c.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(io) => CliError::Io(io.to_string()),
            other => CliError::Format(other.to_string()),
        }
    }
}
