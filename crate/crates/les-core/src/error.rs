//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by any operation in this crate.
///
/// The variants map onto the CLI exit-code convention: I/O and parse
/// failures (1), configuration and comparability failures (2), and
/// numerical failures (3).
#[derive(Debug, Error)]
pub enum LesError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("incomparable inputs: {0}")]
    Comparability(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, LesError>;

impl LesError {
    /// Process exit code for the CLI: 1 i/o, 2 configuration, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            LesError::Io { .. } | LesError::Parse { .. } => 1,
            LesError::Config(_) | LesError::Shape(_) | LesError::Comparability(_) => 2,
            LesError::Numerical(_) => 3,
        }
    }
}
