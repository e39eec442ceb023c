use thiserror::Error;

/// Errors produced anywhere in the clustering engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty community")]
    EmptyCommunity,

    #[error("empty partition")]
    EmptyPartition,

    #[error("node {0} is not part of the graph")]
    UnknownNode(usize),

    #[error("node index {index} out of range for dataset of {n} rows")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("zero-norm embedding at row {0}")]
    ZeroVector(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("partition does not match graph nodes: {0}")]
    PartitionMismatch(String),

    #[error("communities overlap at node {0}")]
    Overlap(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("label length mismatch: {pred} predicted vs {truth} truth")]
    LengthMismatch { pred: usize, truth: usize },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("pipeline phase `{phase}` failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
