use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum UeeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("could not bracket root after {iterations} doublings (last point {last})")]
    Bracket { iterations: usize, last: f64 },
    #[error("non-finite value {value} at {at}")]
    NonFinite { value: f64, at: f64 },
    #[error("root finder stopped after {iterations} iterations without meeting tolerance")]
    NotConverged { iterations: usize },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("unknown utility preset `{0}`")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, UeeError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(UeeError::Domain(msg.into()))
}
