use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The lower-right block of the partition could not be factorized.
    #[error("trailing block is singular or not positive definite")]
    SingularBlock,

    /// The Schur complement left the positive definite cone.
    #[error("Schur complement is not positive definite")]
    NotPositiveDefinite,

    #[error("eigendecomposition did not converge")]
    EigenFailure,

    /// The covariance data cannot seed the solver (objective not evaluable at the origin).
    #[error("infeasible data: {0}")]
    InfeasibleData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unstable AR system: {0}")]
    UnstableSystem(String),

    #[error("empty result: {0}")]
    EmptyResult(String),

    /// Primal recovery produced KKT residuals far beyond the solver tolerances.
    #[error("degenerate primal recovery: {0}")]
    DegenerateRecovery(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
