use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of the dense eigensolver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("QL iteration did not converge for eigenvalue index {index} after {iterations} iterations")]
    NoConvergence { index: usize, iterations: usize },
    #[error("decomposition failed certification: {what} = {value:e} exceeds {limit:e}")]
    Certification {
        what: &'static str,
        value: f64,
        limit: f64,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix dimension must be positive")]
    EmptyMatrix,
    #[error("matrix is not Hermitian at ({row}, {col})")]
    NotHermitian { row: usize, col: usize },
    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("spectral parameter must have eta > 0, got {0}")]
    NonPositiveEta(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("experiment aborted: {failed} of {total} samples failed")]
    FailureRate { failed: u64, total: u64 },
    #[error("fit refused: {0}")]
    FitRefused(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
