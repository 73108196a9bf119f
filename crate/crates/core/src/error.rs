use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("network structure: {0}")]
    Structure(String),

    #[error("{file}: {message}")]
    Schema { file: PathBuf, message: String },

    #[error("backend `{backend}`: {message}")]
    Backend { backend: String, message: String },

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error("power flow diverged after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    Divergence { iterations: usize, mismatch: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn schema(file: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
