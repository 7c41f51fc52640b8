use std::path::{Path, PathBuf};

use thiserror::Error;

/// Everything a command can fail with. Each variant maps to one exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] flowpl_core::Error),
    #[error("gradient audit failed: {0}")]
    Audit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_AUDIT: i32 = 4;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn data(path: &Path, reason: impl ToString) -> Self {
        Error::Data { path: path.to_path_buf(), reason: reason.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        use flowpl_core::Error as C;
        match self {
            Error::Usage(_) => EXIT_USAGE,
            Error::Io { .. } | Error::Data { .. } => EXIT_DATA,
            Error::Audit(_) => EXIT_AUDIT,
            Error::Core(C::Divergence { .. }) => EXIT_DIVERGENCE,
            Error::Core(C::Config(_)) => EXIT_USAGE,
            Error::Core(_) => EXIT_DATA,
        }
    }
}

impl From<flowpl_core::FlowError> for Error {
    fn from(e: flowpl_core::FlowError) -> Self {
        Error::Core(e.into())
    }
}

impl From<flowpl_core::SynthError> for Error {
    fn from(e: flowpl_core::SynthError) -> Self {
        Error::Core(e.into())
    }
}
