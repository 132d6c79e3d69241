use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("metric not positive-definite: {0}")]
    Definiteness(String),
    #[error("normalization violated: {0}")]
    Normalization(String),
    #[error("solver diverged after {iters} iterations (last residual {residual:.3e})")]
    Divergence { iters: usize, residual: f64 },
    #[error("damping floor reached at iteration {iters} (residual {residual:.3e})")]
    DampingFloor { iters: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("solvability condition violated: {0}")]
    Solvability(String),
    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("stencil too small: {0}")]
    Stencil(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
