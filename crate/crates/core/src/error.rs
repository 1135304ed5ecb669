use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("token {token} is out of range for a vocabulary of {total} tokens")]
    TokenOutOfRange { token: usize, total: usize },

    #[error("token {token} is a {found}, expected a {expected}")]
    WrongKind {
        token: usize,
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
