use std::path::PathBuf;

use granular_core::ErrorKind;
use thiserror::Error;

pub type AppResult<T> = Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] granular_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PHYSICS: i32 = 3;
    pub const NON_CONVERGENCE: i32 = 4;
    /// `verify` ran but at least one check failed.
    pub const CHECK_FAILED: i32 = 5;
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        AppError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) => match e.kind() {
                ErrorKind::Config => exit::CONFIG,
                ErrorKind::Physics => exit::PHYSICS,
                ErrorKind::NonConvergence => exit::NON_CONVERGENCE,
            },
            AppError::Io { .. } => exit::IO,
            AppError::Parse { .. } | AppError::Usage(_) => exit::CONFIG,
        }
    }
}
