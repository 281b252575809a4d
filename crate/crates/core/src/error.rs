use thiserror::Error;

/// Errors raised by the operators, the solvers and the file layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported grid shape {dims:?}: {reason}")]
    UnsupportedShape { dims: Vec<usize>, reason: String },

    #[error("malformed spectrum: conjugate-symmetry defect {defect:.3e} exceeds {tolerance:.3e}")]
    MalformedSpectrum { defect: f64, tolerance: f64 },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("interior violation: {0}")]
    InteriorViolation(String),

    #[error("numerical breakdown in PCG at iteration {iteration}: {reason}")]
    NumericalBreakdown { iteration: usize, reason: String },

    #[error("PCG did not converge in {iterations} iterations (residual {residual:.3e})")]
    KrylovNotConverged { iterations: usize, residual: f64 },

    #[error("interior-point method stalled: step length {step:.3e} at iteration {iteration}")]
    Stalled { iteration: usize, step: f64 },

    #[error("dimension {dim} exceeds the dense limit {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    #[error("iteration cap of {0} exceeded")]
    IterationCap(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed header: {0}")]
    Header(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected,
            actual,
        })
    }
}
