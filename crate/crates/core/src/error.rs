use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("subband {subband} regressor has zero power and no regularization is configured")]
    ZeroPowerRegressor { subband: usize },

    #[error("signal has zero power over {samples} calibration samples")]
    ZeroPowerSignal { samples: usize },

    #[error("signal source exhausted: requested {requested} samples, {available} remain")]
    SourceExhausted { requested: usize, available: usize },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("filter length {m} exceeds the dense theory limit of {limit} taps")]
    TheoryTooLarge { m: usize, limit: usize },

    #[error("steady-state model invalid: {0}")]
    ModelInvalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("run {run}, frame {frame}: {source}")]
    InRun {
        run: usize,
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_run(self, run: usize, frame: usize) -> Self {
        Error::InRun {
            run,
            frame,
            source: Box::new(self),
        }
    }
}
