use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("matrix is not Hermitian (relative Frobenius residual {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("singular matrix (determinant {det:.3e})")]
    SingularMatrix { det: f64 },
    #[error("need at least 3 pixels to estimate a model, got {0}")]
    InsufficientPixels(usize),
    #[error("estimated covariance is not positive definite")]
    SingularEstimate,
    #[error("invalid number of looks {0}")]
    InvalidLooks(f64),
    #[error("models have different numbers of looks ({0} vs {1})")]
    LooksMismatch(f64, f64),
    #[error("distance evaluation overflowed")]
    NonFiniteResult,
    #[error("distance between models {i} and {j} failed: {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("quadrature did not converge (estimate {estimate:.6e}, error {error:.3e})")]
    QuadratureFailure { estimate: f64, error: f64 },
    #[error("invalid Renyi order {0}; must lie strictly inside (0, 1)")]
    InvalidOrder(f64),
    #[error("distance {distance} exceeds tau {tau} for pair ({i}, {j})")]
    TauViolation {
        distance: f64,
        tau: f64,
        i: usize,
        j: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training labels contain only one class")]
    OneClassOnly,
    #[error("class {0} has no training pixels")]
    EmptyClass(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible phantom specification: {0}")]
    InfeasibleSpec(String),
    #[error("chance agreement equals one; kappa undefined")]
    DegenerateMarginals,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_pair(self, i: usize, j: usize) -> Error {
        Error::Pair {
            i,
            j,
            source: Box::new(self),
        }
    }

    /// Strips pair annotations to reach the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } => source.root(),
            e => e,
        }
    }
}
