use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The baseline is on the wrong side of the critical value for the
    /// requested operation.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("dynamics diverged at step {step}: a logit exceeded {limit:e} in magnitude")]
    Divergence { step: usize, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::Io { .. } => 4,
            Error::InvalidInput(_)
            | Error::Precondition(_)
            | Error::Regime(_)
            | Error::Config(_) => 2,
        }
    }
}
