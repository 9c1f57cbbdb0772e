use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular or ill-conditioned system: {0}")]
    Singular(String),
    #[error("no convergence after {iterations} iterations (last defect {defect:e})")]
    NotConverged {
        iterations: usize,
        defect: f64,
        history: Vec<f64>,
    },
    #[error("numerical inconsistency: {0}")]
    Inconsistent(String),
}
