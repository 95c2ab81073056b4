use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("calibration error: mean event time incompatible with base measure ({0})")]
    Calibration(String),

    #[error("unsupported strategy: {0}")]
    UnsupportedStrategy(String),

    #[error("unbounded intensity: {0}")]
    UnboundedIntensity(String),

    #[error("{path}:{line}: {msg}")]
    Ingestion {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("slice produced empty support for event {event} (time {time})")]
    EmptySupport { event: usize, time: f64 },

    #[error("accept-reject gave up after {proposals} proposals (n_k = {count}, w_max = {w_max})")]
    ArExhausted {
        proposals: u64,
        count: usize,
        w_max: f64,
    },

    #[error("degenerate slice: minimum slice variable {0:e} is not positive")]
    DegenerateSlice(f64),

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
