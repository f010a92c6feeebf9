use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A Riccati or Cholesky block stayed indefinite after regularization.
    #[error("numerical failure at stage {stage}: {detail}")]
    NumericalFailure { stage: usize, detail: String },

    #[error("did not converge after {iterations} iterations (last residual {last:.3e})")]
    NotConverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("linearization is not controllable (rank {rank} < {expected})")]
    Uncontrollable { rank: usize, expected: usize },

    #[error("trace is empty")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
