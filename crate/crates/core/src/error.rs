use alloc::string::String;

/// Failures surfaced by the simulator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("steady state is degenerate or the system is singular")]
    DegenerateSteadyState,
    #[error("numerical failure at t = {time:e} s: {reason}")]
    Numerical { time: f64, reason: String },
    #[error("truncation did not converge up to {max_levels} levels")]
    Truncation { max_levels: usize },
    #[error("under-sampled data: {0}")]
    Sampling(String),
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
