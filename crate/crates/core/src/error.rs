use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented invariant (bad weights, negative stddev, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A task or config file could not be parsed.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An exhaustive or pruned search exceeded its work budget.
    #[error("capacity exceeded in {what}: budget of {budget} exhausted; {hint}")]
    Capacity {
        what: &'static str,
        budget: u64,
        hint: &'static str,
    },

    #[error("optimizer diverged at iteration {iteration}: objective is {objective}")]
    Divergence { iteration: usize, objective: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Parse { .. }
                | Error::DimensionMismatch { .. }
                | Error::Precondition(_)
                | Error::Io { .. }
                | Error::Json(_)
        )
    }
}
