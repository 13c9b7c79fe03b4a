//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failures reported by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A grid was requested with an unusable size.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two fields (or a field and a grid) do not share the same grid, or a
    /// coefficient vector has the wrong length for the requested bandlimit.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A radius below the admissible region of the background model.
    #[error("radius {r} is below the admissible minimum r_min = {r_min}")]
    RadiusBelowMinimum { r: f64, r_min: f64 },

    /// The background model parameters are inconsistent.
    #[error("invalid background model: {0}")]
    InvalidModel(String),

    /// A curvature pattern that is not a word in the frame alphabet.
    #[error("malformed curvature pattern: {0}")]
    MalformedPattern(String),

    /// An argument outside the documented domain of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A four-vector that is not timelike.
    #[error("four-vector is not timelike: (Z^t)^2 - |Z|^2 = {0}")]
    NonTimelike(f64),

    /// A timelike four-vector that points to the past.
    #[error("four-vector is past-pointing: Z^t = {0}")]
    PastPointing(f64),

    /// A series that must be positive contains a non-positive entry.
    #[error("series is not positive at index {0}")]
    NonPositiveSeries(usize),

    /// Too few samples for a fit.
    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    /// The graph function lost positivity (or fell below r_min).
    #[error("graph function left the admissible region: min omega = {0}")]
    PositivityLost(f64),

    /// An iterative linear solve did not reach its tolerance.
    #[error("linear solve did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    /// The affine elimination of the area constraint degenerated.
    #[error("degenerate area constraint: denominator {0:.3e}")]
    DegenerateConstraint(f64),

    /// The Newton iteration stopped making progress.
    #[error("residual stagnation at iteration {iteration}: residual {residual:.3e}")]
    Stagnation { iteration: usize, residual: f64 },

    /// A time step failed repeatedly even after step halving.
    #[error("time step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    /// A selector value that is not known.
    #[error("unknown selector: {0}")]
    UnknownSelector(String),

    /// A foliation leaf could not be solved.
    #[error("leaf at sigma = {sigma} failed: {reason}")]
    LeafFailure { sigma: f64, reason: String },

    /// A snapshot file could not be parsed.
    #[error("snapshot format error: {0}")]
    Snapshot(String),
}
