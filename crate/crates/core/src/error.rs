//! Error type shared across the crate.
//!
//! Errors split into two classes so the CLI can map them to exit codes:
//! configuration errors (malformed or inconsistent inputs) and numeric
//! errors (an algorithm hit a cap or lost finiteness at runtime).

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
}

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("invalid subspace: {0}")]
    InvalidSubspace(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),
    #[error("Monte-Carlo volume radius supports dimension <= {cap}, got {dim}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("moment order q={q} exceeds cap {cap} at {n_samples} samples; needs at least {required}")]
    MomentCap { q: f64, cap: f64, n_samples: u64, required: u64 },
    #[error("sampling chain stalled: {0}")]
    ChainStall(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("tolerance not reached: {0}")]
    ToleranceUnreached(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl GeomError {
    pub fn class(&self) -> ErrorClass {
        use GeomError::*;
        match self {
            DimensionMismatch(_) | InvalidBody(_) | InvalidSubspace(_) | InvalidMeasure(_)
            | InvalidParameter(_) | InvalidConfig(_) | Unsupported(_) => ErrorClass::Config,
            LinearProgram(_) | DimensionCap { .. } | MomentCap { .. } | ChainStall(_)
            | NonFinite(_) | ToleranceUnreached(_) | Io(_) => ErrorClass::Numeric,
        }
    }
}

impl From<std::io::Error> for GeomError {
    fn from(e: std::io::Error) -> Self {
        GeomError::Io(e.to_string())
    }
}
