use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HlgpError {
    #[error("capacity {capacity} is below the largest demand {max_demand}")]
    CapacityBelowDemand { capacity: u32, max_demand: u32 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),

    #[error("customer index {index} out of range for {n} customers")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("subgraph demand {demand} exceeds capacity {capacity}")]
    OverCapacity { demand: u32, capacity: u32 },

    #[error("empty subgraph")]
    EmptySubgraph,

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    #[error("invalid route plan: {0}")]
    InvalidPlan(String),

    #[error("infeasible subproblem: {0}")]
    InfeasibleSubproblem(String),

    #[error("non-finite feature `{0}`")]
    NonFiniteFeature(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("local decode produced {0} subgraphs, expected 2")]
    LocalSplit(usize),

    #[error("labeled step {step}: target action has zero probability")]
    MaskedTarget { step: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HlgpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HlgpError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        HlgpError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by bad input data rather than the filesystem.
    pub fn is_validation(&self) -> bool {
        !matches!(self, HlgpError::Io { .. } | HlgpError::Csv(_))
    }
}

pub type Result<T, E = HlgpError> = std::result::Result<T, E>;
