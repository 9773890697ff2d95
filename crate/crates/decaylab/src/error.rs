//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument to a library operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file problems (missing keys, unknown keys, range
    /// violations). Maps to exit code 2 in the CLI.
    #[error("config error: {0}")]
    Config(String),

    /// A simulation produced non-finite values. Maps to exit code 3.
    #[error("instability: {0}")]
    Instability(String),

    /// A numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// CLI exit code category for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Instability(_) => 3,
            _ => 1,
        }
    }
}
