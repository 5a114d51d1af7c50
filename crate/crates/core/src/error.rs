use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GalaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GalaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("worker failed: {0}")]
    Worker(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GalaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GalaError::InvalidArgument(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        GalaError::Protocol(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        GalaError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GalaError::Io {
            path: path.into(),
            source,
        }
    }
}
