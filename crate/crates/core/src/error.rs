use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("area index {index} out of range for a graph with {n_areas} areas")]
    IndexOutOfRange { index: usize, n_areas: usize },

    #[error("self-loop on area {0}")]
    SelfLoop(usize),

    #[error("duplicate area id `{0}`")]
    DuplicateId(String),

    #[error("unknown area id `{0}`")]
    UnknownId(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid value for {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("graph has no edges")]
    NoEdges,

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("model configuration: {0}")]
    Config(String),

    #[error("no finite-density starting state found after {0} attempts")]
    Initialization(usize),

    #[error("scale adaptation requested after burn-in; adaptation is frozen")]
    AdaptationFrozen,

    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data or configuration rather than
    /// by a failure during computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data { .. }
                | Error::Io { .. }
                | Error::UnknownId(_)
                | Error::DuplicateId(_)
                | Error::IndexOutOfRange { .. }
                | Error::SelfLoop(_)
                | Error::Config(_)
                | Error::Dimension { .. }
                | Error::InvalidParameter { .. }
        )
    }
}
