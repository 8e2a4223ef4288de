use std::path::PathBuf;

use crate::graph::{NeuronId, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of an [`Error`], used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Numerical,
    Invalid,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    GraphInvalid(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimension { expected: Vec<usize>, actual: Vec<usize> },

    #[error("neuron {0} is out of range")]
    NeuronOutOfRange(NeuronId),

    #[error("removing the group would leave layer {0} without channels")]
    LayerExhausted(NodeId),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("blob checksum mismatch: manifest says {expected:08x}, blob hashes to {actual:08x}")]
    Checksum { expected: u32, actual: u32 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("class {class} has {available} samples but {required} are required")]
    Shortfall { class: usize, available: usize, required: usize },

    #[error("image selection stalled at relaxation {delta}: class {class} reaches only {count} of {required} images")]
    SelectionStalled { delta: usize, class: usize, count: usize, required: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Io { .. } => ErrorKind::Io,
            Error::Format { .. } | Error::Checksum { .. } => ErrorKind::Io,
            Error::TrainingDiverged { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Invalid,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format { what, reason: reason.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::GraphInvalid(msg.into())
    }
}
