use thiserror::Error;

/// Errors raised by the simulation, theory and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("inconsistent configuration: {0}")]
    Configuration(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("training diverged at step {step}: loss {loss} (initial {initial})")]
    Diverged { step: u64, loss: f64, initial: f64 },

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("no mid-training regime: {0}")]
    NoMidTraining(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidParameter(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> LabError {
    LabError::DimensionMismatch(msg.into())
}
