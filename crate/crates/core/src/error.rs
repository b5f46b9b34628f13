//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by density construction, quadrature, and checkers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Grid evaluation outside the grid box.
    #[error("point outside grid domain on axis {axis}: {value} not in [{lo}, {hi}]")]
    OutOfDomain {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Discretization box misses too much probability mass.
    #[error("box covers too little mass: estimated tail mass outside box is {outside_mass:e}")]
    InsufficientCoverage { outside_mass: f64 },

    #[error("grid has zero total mass")]
    ZeroMass,

    /// Quadrature failed the two-resolution convergence heuristic.
    #[error("integral did not converge: {detail}")]
    DivergentIntegral { detail: String },

    /// The Fisher mask removed too much probability mass.
    #[error("degenerate support: masked nodes carry mass {excluded_mass:e} > {limit:e}")]
    DegenerateSupport { excluded_mass: f64, limit: f64 },

    #[error("unsupported dimension {dim} (maximum {max})")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("covariance is numerically singular (min eigenvalue {min_eigenvalue:e})")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("unsupported representation: {detail}")]
    UnsupportedRepresentation { detail: String },

    /// Non-positive input where a positive one is required (AM-GM entries).
    #[error("non-positive input value {value}")]
    NonPositiveInput { value: f64 },

    /// Non-positive function value where strict positivity is required.
    #[error("non-positive function value {value}{}", at.as_deref().map(|s| format!(" at {s}")).unwrap_or_default())]
    NonPositiveValue { value: f64, at: Option<String> },

    #[error("non-positive trace {value}")]
    NonPositiveTrace { value: f64 },

    /// Lattice sample of a positive test function came out non-positive.
    #[error("test function is non-positive at lattice point {point} (value {value})")]
    NonPositiveSample { point: f64, value: f64 },

    /// Quantile argument outside (0, 1).
    #[error("argument {value} outside the open interval (0, 1)")]
    OutOfRange { value: f64 },

    /// Function leaves [0, 1] where a [0, 1] range is required.
    #[error("function value {value} outside [0, 1] (tolerance {tol:e})")]
    RangeViolation { value: f64, tol: f64 },

    /// Construction-time invariant failure.
    #[error("invalid specification: {detail}")]
    InvalidSpec { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidSpec {
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
