use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegError {
    #[error("grid {n1}x{n2} is too small: at least 2 samples per axis are required")]
    DimensionTooSmall { n1: usize, n2: usize },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("channel count mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {what} at iteration {iter}")]
    NonFinite { what: &'static str, iter: usize },

    #[error("lifting recipe error: {0}")]
    Recipe(String),

    #[error("label map error: {0}")]
    Labels(String),
}

pub type Result<T> = std::result::Result<T, SegError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SegError {
    SegError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
