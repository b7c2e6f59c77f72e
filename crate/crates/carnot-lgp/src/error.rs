//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (dimension mismatch,
    /// non-positive scale, non-finite coordinate, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An object could not be constructed (empty interior, empty
    /// neighborhood, mismatched shapes, ...).
    #[error("construction failed: {0}")]
    Construction(String),

    /// Config file or expression rejected by the parser.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative method failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
