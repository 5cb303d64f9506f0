use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not Hermitian (asymmetry {residual:.3e})")]
    NonHermitian { residual: f64 },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("|Re z| = {re:.3} exceeds the configured power range {z_max}")]
    PowerRangeExceeded { re: f64, z_max: f64 },
    #[error("bad quadrature: {0}")]
    BadQuadrature(String),
    #[error("kraus list is empty")]
    EmptyKraus,
    #[error("channel is not state preserving (residual {residual:.3e})")]
    NotStatePreserving { residual: f64 },
    #[error("channel is not a unital state-preserving cp map: {0}")]
    NotMarkov(String),
    #[error("bad Schur multiplier: {0}")]
    BadSchurMatrix(String),
    #[error("partition projections do not commute with the density")]
    ProjectionsDontCommuteWithD,
    #[error("unitary does not commute with the density")]
    UnitaryDoesntCommuteWithD,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("bad convex weights: {0}")]
    BadWeights(String),
    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}
