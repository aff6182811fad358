use thiserror::Error;

pub type Result<T> = std::result::Result<T, RecourseError>;

/// Errors raised by the recourse toolkit.
///
/// Everything except [`RecourseError::Internal`] and [`RecourseError::Io`] is
/// caused by caller input and maps to exit status 1 in the CLI and HTTP 400
/// in the service.
#[derive(Debug, Error)]
pub enum RecourseError {
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value for feature `{feature}`")]
    NonFinite { feature: String },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("missing feature `{0}`")]
    MissingFeature(String),

    #[error("feature `{feature}`: {message}")]
    Feature { feature: String, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("the point already scores {score} >= {margin}; no change is needed")]
    NoRecourseNeeded { score: f64, margin: f64 },

    #[error("brute-force search would enumerate {combinations} combinations (cap {cap}); shrink the instance")]
    CapExceeded { combinations: u128, cap: u128 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RecourseError {
    pub fn input(message: impl Into<String>) -> Self {
        RecourseError::Input(message.into())
    }

    pub fn feature(feature: impl Into<String>, message: impl Into<String>) -> Self {
        RecourseError::Feature {
            feature: feature.into(),
            message: message.into(),
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        RecourseError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True when the error was caused by the caller rather than by the toolkit.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, RecourseError::Internal(_) | RecourseError::Io(_))
    }
}
