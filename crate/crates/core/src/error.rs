use thiserror::Error;

use crate::nn::MlpModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("time {t} is below the smallest supported time {min}")]
    TimeTooSmall { t: f64, min: f64 },

    #[error("{0} has full support; no nearest manifold point")]
    UnsupportedDistribution(&'static str),

    #[error("non-finite drift at t = {t} for x = {x:?}")]
    NonFiniteDrift { x: Vec<f64>, t: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate estimate: effective sample size {ess:.2} < {min}")]
    DegenerateEstimate { ess: f64, min: f64 },

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("degenerate curve: {0}")]
    DegenerateFit(String),

    #[error("training diverged at step {step} (non-finite loss)")]
    TrainingDiverged { step: usize, last_finite: Box<MlpModel> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
