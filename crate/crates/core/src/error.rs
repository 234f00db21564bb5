use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Class name missing from a vocabulary, or a malformed vocabulary.
    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    /// Input violates a domain invariant (negative time, event past the clip end, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Caller broke an operation's precondition (shape mismatch, logits where probabilities are required, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Requested size does not fit the input.
    #[error("size error: {0}")]
    Size(String),

    /// NaN or infinite value where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged.
    #[error("training diverged at step {step}: {reason}")]
    Training { step: usize, reason: String },

    /// Malformed text input, located by file, line and column (1-based).
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },

    /// Malformed binary container.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by the filesystem rather than by input content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
