use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the odometry toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The input is too small or too degenerate to work with.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A time query fell outside the span covered by a pose buffer.
    #[error("time {t} ns outside buffer span [{start}, {end}]")]
    Extrapolation { t: u64, start: u64, end: u64 },

    /// A binary or text file could not be decoded.
    #[error("{path}: {message} (at offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Invalid configuration or scenario content.
    #[error("config error: {0}")]
    Config(String),

    /// Pipeline-level failure with no more specific category.
    #[error("{0}")]
    Pipeline(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
