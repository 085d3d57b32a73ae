use thiserror::Error;

use crate::fit::TraceEntry;
use crate::metrics::ShapeFlags;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ambiguous configuration: {0}")]
    Ambiguous(String),

    #[error("contour is not star-shaped about the center: ray at {angle_rad:.6} rad has {crossings} crossings")]
    NonStarShaped { angle_rad: f64, crossings: usize },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("rank deficiency: eigenvalue of mode {mode} is below the projection cutoff")]
    Rank { mode: usize },

    #[error("explained variance undefined: all eigenvalues are zero")]
    UndefinedVariance,

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("optimization diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        trace: Vec<TraceEntry>,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("infeasible generator configuration: {0}")]
    InfeasibleConfig(String),

    #[error("unrealistic shape: {0}")]
    UnrealisticShape(ShapeFlags),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Numerical failures (as opposed to bad input) are reported separately by callers.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::Degenerate(_) | Error::Rank { .. }
        )
    }
}
