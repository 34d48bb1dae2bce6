use std::path::PathBuf;

use thiserror::Error;

use crate::features::LayoutHash;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    /// Referenced file does not exist (dangling manifest entry, absent input).
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("feature layout mismatch: model expects {expected}, got {found}")]
    LayoutMismatch {
        expected: LayoutHash,
        found: LayoutHash,
    },

    #[error("model format error: {0}")]
    Format(String),

    /// Cross-validation could not produce a usable well split.
    #[error("cannot split: {0}")]
    Split(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::MissingFile(_))
    }
}
