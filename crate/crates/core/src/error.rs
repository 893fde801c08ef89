use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is numerically singular (condition estimate {cond:.3e}){}", .lambda.map(|l| format!(" at lambda = {l}")).unwrap_or_default())]
    NearSingular { cond: f64, lambda: Option<f64> },
    #[error("Neumann series does not contract (factor {0:.4})")]
    NoContraction(f64),
    #[error("filtration did not stabilize within {0} steps")]
    NoStabilization(usize),
    #[error("operator is not nilpotent (residual {0:.3e})")]
    NotNilpotent(f64),
    #[error("operator is not symmetric for the bilinear form (residual {0:.3e})")]
    NotSymmetric(f64),
    #[error("no vector with nonzero pairing at chain length {0}")]
    DegeneratePairing(usize),
    #[error("duality pairing between V X1 and R0(0) X_diag is singular")]
    DualityDegenerate,
    #[error("eigenvalue clusters too close to separate ({0:.3e})")]
    ClusterAmbiguous(f64),
    #[error("zero vector")]
    ZeroVector,
    #[error("eigendecomposition rejected: eigenvector condition {0:.3e}")]
    NearDefective(f64),
    #[error("fixture construction failed: {0}")]
    FixtureFailed(String),
    #[error("linear algebra backend failure: {0}")]
    Backend(String),
}

pub type Result<T> = std::result::Result<T, Error>;
