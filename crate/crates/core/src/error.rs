use thiserror::Error;

/// Errors produced by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    #[error("iteration diverged at k = {iteration}: {what} is not finite")]
    Divergence {
        iteration: usize,
        what: &'static str,
    },

    #[error("recorder error: {0}")]
    Recorder(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
