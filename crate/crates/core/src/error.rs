use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid torus: {0}")]
    InvalidTorus(String),

    #[error("momentum {0:?} is not on the dual lattice")]
    NotDualMomentum(Vec<f64>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Raised when a matrix that must be positive definite is not.
    /// Carries the t-field that produced it.
    #[error("Cholesky factorization failed at pivot {pivot} (value {value:e}) for t = {t:?}")]
    NotPositiveDefinite { pivot: usize, value: f64, t: Vec<f64> },

    #[error("overflow guard: |t| = {value} exceeds {limit} at vertex {vertex}")]
    Overflow { vertex: usize, value: f64, limit: f64 },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("observable violates the admissible growth envelope: {0}")]
    Envelope(String),

    #[error("insufficient samples: need at least {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("grassmann: {0}")]
    Grassmann(String),

    #[error("form is not supersymmetric: |QF| = {residual:e} at point {point:?}")]
    NotSupersymmetric { residual: f64, point: Vec<f64> },
}
