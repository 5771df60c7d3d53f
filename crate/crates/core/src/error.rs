use thiserror::Error;

/// Errors produced by the codec, its file formats, and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pixel ({x}, {y}) outside {width}x{height} grid")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Malformed image data; `offset` is the byte position where decoding stopped.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// Parameter or report document failed validation at the given JSON pointer.
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn validation(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: msg.into(),
        }
    }
}
