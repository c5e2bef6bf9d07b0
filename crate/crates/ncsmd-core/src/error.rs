//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An evaluation point is not strictly inside the action set.
    #[error("point is not strictly interior (distance to boundary {distance:.3e})")]
    BoundaryViolation { distance: f64 },

    /// A matrix expected to be symmetric positive definite is not.
    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    /// Damped Newton failed to reach the requested residual.
    #[error("mirror-map inversion did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: u32, residual: f64 },

    /// A link function was asked to operate outside its valid range.
    #[error("invalid range for link function: {0}")]
    InvalidRange(String),

    /// A modeling assumption failed a numerical check at construction.
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    /// The operation is only defined for a specific link function.
    #[error("operation requires the {expected} link, instance uses {actual}")]
    WrongLink {
        expected: &'static str,
        actual: String,
    },

    /// An operation needs at least one recorded step.
    #[error("trajectory is empty")]
    EmptyTrajectory,

    /// Input unsuitable for a fit or estimate.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Experiment configuration failed validation.
    #[error("config error at `{field}`: {message}")]
    ConfigError { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
