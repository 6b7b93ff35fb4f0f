//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by estimation, simulation, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Erosion depth consumed the whole window.
    #[error("erosion of depth {depth} leaves an empty window (sides {width} x {height})")]
    EmptyErosion {
        depth: f64,
        width: f64,
        height: f64,
    },

    /// A K-function estimator was asked for a type with zero observed points.
    #[error("type {type_index} has zero observed points; intensity estimate is zero")]
    ZeroIntensity { type_index: usize },

    /// Ripley weight undefined: the circle through a pair lies entirely
    /// outside the window.
    #[error("isotropic edge weight overflow: circle fraction is zero at distance {dist}")]
    WeightOverflow { dist: f64 },

    /// Two curve sets tabulated on different grids were combined.
    #[error("distance grids do not match (n0 {n0_a} vs {n0_b}, R {r_a} vs {r_b})")]
    GridMismatch {
        n0_a: usize,
        n0_b: usize,
        r_a: f64,
        r_b: f64,
    },

    /// A genuinely negative curve value reached a fractional power.
    #[error("negative curve value {value} at entry ({i},{j}) cannot be raised to a fractional power")]
    NegativeBase { value: f64, i: usize, j: usize },

    /// Input too small or degenerate for the requested operation.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Circulant embedding produced negative eigenvalues beyond tolerance.
    #[error("circulant embedding failed: min eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    EmbeddingFailure { min_eigenvalue: f64, tolerance: f64 },

    /// The B matrix is numerically singular.
    #[error("B matrix numerically singular (condition estimate {cond:e})")]
    SingularB { cond: f64 },

    /// Too many Monte-Carlo replicates failed to estimate.
    #[error("{failed} of {total} Monte-Carlo replicates failed (limit {limit_percent}%)")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit_percent: f64,
    },

    /// Invalid configuration or data file content.
    #[error("validation: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of numerical routines (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EmbeddingFailure { .. }
                | Error::SingularB { .. }
                | Error::TooManyFailures { .. }
                | Error::WeightOverflow { .. }
                | Error::NegativeBase { .. }
        )
    }
}
