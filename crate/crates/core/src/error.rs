use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cage error: {0}")]
    Cage(String),

    #[error("non-finite value at step {step} in constraint {constraint}")]
    NonFinite { step: usize, constraint: String },

    #[error("adjoint sweep failed at step {step}: {message}")]
    Adjoint { step: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("refit iteration {iteration}: {source}")]
    Refit {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Cage(_) | Error::Dimension(_) | Error::Usage(_) => 1,
            Error::Parse { .. } => 1,
            Error::NonFinite { .. } | Error::Adjoint { .. } => 2,
            Error::Io { .. } => 3,
            Error::Refit { source, .. } => source.exit_code(),
        }
    }
}
