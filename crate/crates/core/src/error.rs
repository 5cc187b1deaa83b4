use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants map onto distinct failure classes so that front ends can pick an
/// exit status without string matching.
#[derive(Debug, Error)]
pub enum IcsError {
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A request exceeded what the construction can provide.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Two inputs disagree about shapes or sizes.
    #[error("configuration mismatch: {0}")]
    Config(String),

    /// Input data violates a domain invariant.
    #[error("invalid data: {0}")]
    Data(String),

    /// A text file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A metric is undefined for the supplied inputs.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// An internal invariant was broken.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IcsError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IcsError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        IcsError::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = IcsError> = std::result::Result<T, E>;
