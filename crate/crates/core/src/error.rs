use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("propagation accuracy violated at step {step}: {reason}")]
    PropagationAccuracy { step: usize, reason: String },

    #[error("steady state not reached: residual {residual:e} after {t_elapsed:e} s")]
    NonConvergence { residual: f64, t_elapsed: f64 },

    #[error("Bloch angle undefined for a maximally mixed state")]
    UndefinedAngle,

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("functional increased from {previous:e} to {current:e} at iteration {iteration}")]
    MonotonicityViolation { iteration: usize, previous: f64, current: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
