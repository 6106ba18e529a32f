use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("node id {id} out of range for {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("operation requires a directed graph")]
    RequiresDirected,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

impl Error {
    /// Process exit code: 2 for bad configuration or input, 3 for invariant
    /// violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingFile(_)
            | Error::Parse { .. }
            | Error::NodeOutOfRange { .. }
            | Error::InvalidDataset(_)
            | Error::InvalidConfig(_)
            | Error::RequiresDirected => 2,
            Error::Invariant(_) => 3,
            _ => 1,
        }
    }
}
