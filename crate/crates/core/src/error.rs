use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid ensemble or law parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative routine failed to converge or lost accuracy.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An algebraic identity that must hold exactly was violated beyond tolerance.
    #[error("identity violated: {what}: deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    IdentityViolation {
        what: String,
        deviation: f64,
        tolerance: f64,
    },

    /// An experiment plan cannot be executed as specified.
    #[error("plan error: {0}")]
    Plan(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn identity(what: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        Error::IdentityViolation {
            what: what.into(),
            deviation,
            tolerance,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Plan(_) | Error::Config(_) => 2,
            Error::IdentityViolation { .. } => 3,
            _ => 1,
        }
    }
}
