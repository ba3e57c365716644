use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Byte-level decoding failed (bad magic, truncation, trailing bytes).
    #[error("format error: {0}")]
    Format(String),

    /// A value violates a type invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Similarity is undefined, e.g. a zero-variance input to NCC.
    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("statement false at clause ({clause}): {reason}")]
    StatementFalse { clause: char, reason: String },

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }
}
