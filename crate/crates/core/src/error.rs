use std::path::PathBuf;

use thiserror::Error;

/// Every failure the simulator can report.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),

    #[error("duplicate link name `{0}`")]
    DuplicateLink(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("no path from `{origin}` to `{destination}`")]
    UnreachableDemand { origin: String, destination: String },

    #[error("node `{node}` has no outgoing link toward `{destination}`")]
    NoCandidate { node: String, destination: String },

    #[error("links `{from}` and `{to}` are not consecutive")]
    DisconnectedPath { from: String, to: String },

    #[error("internal consistency violation: {0}")]
    Consistency(String),

    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<SimError>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the input data.
    pub fn is_io(&self) -> bool {
        match self {
            SimError::Io { .. } => true,
            SimError::InFile { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
