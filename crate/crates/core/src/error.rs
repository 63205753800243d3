use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dependency tree: {0}")]
    Tree(String),

    #[error("invalid sentence: {0}")]
    Sentence(String),

    #[error("serialization error: {0}")]
    Serialize(String),

    #[error("position or span out of range: {0}")]
    OutOfRange(String),

    #[error("gold span ({start},{end}) of sentence {sentence} is not in the lattice")]
    GoldNotInLattice {
        sentence: usize,
        start: usize,
        end: usize,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that indicate a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}
