use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{name} is not positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { name: String, min_eigenvalue: f64 },

    #[error("{name} is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { name: String, min_eigenvalue: f64 },

    #[error("{name} is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { name: String, asymmetry: f64 },

    #[error("{0} contains a non-finite entry")]
    NonFiniteEntry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("B'SB + R is singular at t = {t}")]
    SingularInnovation { t: usize },

    #[error("infeasible budget: {0}")]
    Infeasible(String),

    #[error("solver hit the iteration limit ({iterations}) with duality gap bound {gap:e}")]
    MaxIterations { iterations: usize, gap: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("information increment at t = {t} has eigenvalue {min_eigenvalue:e} < 0")]
    NegativeIncrement { t: usize, min_eigenvalue: f64 },

    #[error("innovation covariance is singular at t = {t}")]
    SingularInnovationCovariance { t: usize },

    #[error("stacked covariance is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("operation supports scalar states only (n = {0})")]
    UnsupportedDimension(usize),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}
