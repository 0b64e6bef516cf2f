use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the extraction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t:.3} s is outside the protocol duration {duration:.3} s")]
    OutOfRange { t: f64, duration: f64 },

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no usable estimate: {0}")]
    NoEstimate(String),

    #[error("spatial gradient vanishes; regression is undefined")]
    ZeroGradient,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
