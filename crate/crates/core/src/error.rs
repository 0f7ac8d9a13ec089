use thiserror::Error;

use crate::io::FormatError;
use crate::tensor::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("class count mismatch: {left} vs {right}")]
    ClassCountMismatch { left: u32, right: u32 },

    #[error("predicted map contains ignore label {id} at ({row}, {col})")]
    PredictedIgnore { id: u32, row: usize, col: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A metric whose denominator is zero.
    #[error("undefined result: {0}")]
    Undefined(&'static str),

    #[error(transparent)]
    Violation(#[from] Violation),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(left: (usize, usize), right: (usize, usize)) -> Self {
        Error::ShapeMismatch { left: format!("{}x{}", left.0, left.1), right: format!("{}x{}", right.0, right.1) }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
