use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown environment `{name}` (valid: {valid})")]
    UnknownEnv { name: String, valid: String },

    #[error("step called after the episode finished")]
    EpisodeDone,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
