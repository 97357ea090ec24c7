use std::path::PathBuf;

use crate::dpw::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed container or text file. `offset` is a byte offset for binary
    /// formats and a 1-based line number for text formats.
    #[error("format error in {path} at {unit} {offset}: {message}")]
    Format {
        path: PathBuf,
        unit: &'static str,
        offset: u64,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid hierarchical warping path: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidHipa(Vec<Violation>),

    #[error("training diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn bytes(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            unit: "byte",
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn line(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            unit: "line",
            offset: line,
            message: message.into(),
        }
    }

    /// Process exit code class: 1 for I/O and format, 2 for validation,
    /// 3 for numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } => 1,
            Error::Dimension(_) | Error::Invalid(_) | Error::InvalidHipa(_) => 2,
            Error::Divergence(_) => 3,
        }
    }
}
