use thiserror::Error;

/// Errors raised by the analysis, optimization and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),

    #[error("sampled return {value} violates the support constraint r >= -1")]
    SupportViolation { value: f64 },

    #[error("second log-moment possibly infinite: {0}")]
    HeavyTail(String),

    #[error("ratio undefined: growth and variance are both zero")]
    UndefinedRatio,

    #[error("quadrature did not converge: estimated error {error:e} after {subdivisions} subdivisions")]
    Quadrature { error: f64, subdivisions: usize },

    #[error("root not bracketed on [{lo}, {hi}]")]
    NotBracketed { lo: f64, hi: f64 },

    #[error("wealth ruined at step {step}: 1 + f*r = {value}")]
    Ruin { step: usize, value: f64 },

    #[error("too few batches for batch means: {batches} (need at least 10)")]
    TooFewBatches { batches: usize },

    #[error("passage is not almost surely finite: growth rate {0} <= 0")]
    NoPositiveGrowth(f64),

    #[error("non-finite value in simulated path at t = {0}")]
    NonFinitePath(f64),

    #[error("passage not reached within {0} steps")]
    PassageCap(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
