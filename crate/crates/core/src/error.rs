use std::path::PathBuf;

use thiserror::Error;

use crate::tree::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("invalid price {0}: must lie in [0, 1]")]
    InvalidPrice(f64),
    #[error("invalid valuation pair ({s}, {b}): components must lie in [0, 1]")]
    InvalidValuation { s: f64, b: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("context is outside the region of node {0}")]
    OutsideRegion(NodeId),
    #[error("the root node has no parent")]
    RootHasNoParent,
    #[error("cannot mark node {0}: its parent is not marked")]
    ParentNotMarked(NodeId),
    #[error("node {0} is already marked")]
    AlreadyMarked(NodeId),
    #[error("invalid tree parameters: {0}")]
    InvalidTreeParams(String),
    #[error("feedback does not match a pending posted price")]
    UnexpectedFeedback,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("grid values are not {lipschitz}-Lipschitz: |f(x_{i}) - f(x_{j})| exceeds the bound")]
    NotLipschitz { lipschitz: f64, i: usize, j: usize },
    #[error("slope undefined: regret series is not positive on the tail window")]
    SlopeUndefined,
    #[error("no runs")]
    NoRuns,
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
