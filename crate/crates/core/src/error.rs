use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix or state fails a structural or physicality check.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An iterative routine did not reach its tolerance.
    #[error("numeric failure in {routine}: {detail} (after {iterations} iterations)")]
    NumericFailure {
        routine: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file or config.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn invalid_state(msg: impl Into<String>) -> Error {
    Error::InvalidState(msg.into())
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Format(e.to_string())
    }
}
