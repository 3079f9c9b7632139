use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degree overflow: {what} has degree {degree}, but at most {max} is supported")]
    DegreeOverflow {
        what: String,
        degree: usize,
        max: usize,
    },

    #[error("relaxation order {k} is too small (need 2k >= {needed})")]
    OrderTooSmall { k: usize, needed: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing label: {0}")]
    MissingLabel(String),

    #[error("undefined moments: {0}")]
    UndefinedMoments(String),

    #[error("quantile index unsolvable for N={n}, eps={eps}, beta={beta}")]
    QuantileUnsolvable { n: usize, eps: f64, beta: f64 },

    #[error("conic solver failed: {0}")]
    Solver(String),
}
