use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Crate-wide error type.
///
/// The split matters for the CLI contract: rejected input maps to exit code
/// 1, everything that goes wrong after validation (I/O, numerics) to 2.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data or configuration violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Filesystem failure while writing artifacts or reading a readable path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A numeric routine broke down (eigensolver or SVD non-convergence,
    /// non-finite intermediate values).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 1,
            Error::Io { .. } | Error::Numerical(_) => 2,
        }
    }

    /// Prefix the message with the pipeline stage that failed. I/O errors
    /// keep their path, which already locates the failure.
    pub(crate) fn stage(self, stage: &str) -> Self {
        match self {
            Error::InvalidInput(msg) => Error::InvalidInput(format!("{stage}: {msg}")),
            Error::Numerical(msg) => Error::Numerical(format!("{stage}: {msg}")),
            io @ Error::Io { .. } => io,
        }
    }
}
