//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by warp, solve, and I/O operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {expected} vs {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("need >= {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("no consensus model found (fewer than 4 inliers)")]
    NoModel,

    #[error("point {index} maps outside the feature grid")]
    PointOutOfFrame { index: usize },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("metric undefined: overlap region is empty")]
    EmptyOverlap,

    #[error("metric undefined: overlap thinner than the 7x7 SSIM window")]
    OverlapTooThin,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("image codec error: {0}")]
    Codec(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl std::fmt::Debug,
        got: impl std::fmt::Debug,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }
}
