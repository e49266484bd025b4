use thiserror::Error;

/// Failure modes shared across the crate.
///
/// Per-sample failures (`SeparationViolated`, `DefectivePair`) are expected
/// occasionally in Monte Carlo sweeps; the harness counts and discards them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("defective eigenpair: {0}")]
    DefectivePair(String),
    #[error("separation violated: {0}")]
    SeparationViolated(String),
    #[error("ill-conditioned: condition estimate {0:e} exceeds limit")]
    IllConditioned(f64),
    #[error("ambiguous branch of the self-consistent equation at w = {0}")]
    BranchAmbiguity(String),
    #[error("quadrature tolerance unreachable: {0}")]
    QuadratureFailure(String),
    #[error("no sign change on bracket: {0}")]
    BracketFailure(String),
    #[error("finite differences unstable: {0}")]
    FdInstability(String),
    #[error("eigenvalue collision: |lambda - lambda_j| = {0:e}")]
    EigenvalueCollision(f64),
    #[error("quadratic form not positive definite: {0}")]
    PositivityLost(String),
    #[error("linear algebra backend failure: {0}")]
    Linalg(String),
    #[error("discard cap exceeded: {discarded} of {total} samples failed")]
    DiscardCapExceeded { discarded: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error is a per-sample event the harness may discard.
    pub fn is_discardable(&self) -> bool {
        matches!(
            self,
            Error::SeparationViolated(_) | Error::DefectivePair(_) | Error::IllConditioned(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
