use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no stationary state: kappa must be positive (got {0})")]
    NoStationaryState(f64),

    #[error("incommensurate window: span {span} is not an integer number of drive periods {period}")]
    IncommensurateWindow { span: f64, period: f64 },

    #[error("aliasing risk: {per_period} samples per period, need at least {required}")]
    AliasingRisk { per_period: usize, required: usize },

    #[error("grid is not uniform: {0}")]
    NonUniformGrid(String),

    #[error("grid is not strictly increasing at index {0}")]
    NotIncreasing(usize),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("step too large: h * rate = {product} exceeds {limit}")]
    StepTooLarge { product: f64, limit: f64 },

    #[error("horizon {horizon} exceeds bath recurrence time {recurrence}")]
    RecurrenceExceeded { horizon: f64, recurrence: f64 },

    #[error("negative lag tau = {0}; use Hermitian symmetry for tau < 0")]
    NegativeLag(f64),

    #[error("series is not stationary")]
    NotStationary,

    #[error("not enough trials: {got} < {min}")]
    TooFewTrials { got: usize, min: usize },

    #[error("time {time} is not on the integration grid with step {step}")]
    OffGrid { time: f64, step: f64 },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
