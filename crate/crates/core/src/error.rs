use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("mode {index}: pole magnitude {magnitude} not strictly inside the unit circle")]
    UnstableMode { index: usize, magnitude: f64 },
    #[error("spectral radius {0} >= 1 violates the stability assumption")]
    Unstable(f64),
    #[error("{0} must be symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("{0} must be positive semidefinite")]
    NotPositiveSemidefinite(&'static str),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("state disagrees with the candidate's base solution: {0}")]
    StateMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
