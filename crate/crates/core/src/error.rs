use thiserror::Error;

/// Errors produced by the solver and its building blocks.
#[derive(Error, Debug)]
pub enum CoreError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("noise path does not cover requested range: {0}")]
    PathCoverage(String),
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error("empty cloud")]
    EmptyCloud,
    #[error("cloud not converged: {0}")]
    NotConverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
