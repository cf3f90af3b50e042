use thiserror::Error;

/// Errors raised by graph construction, simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node {node} out of range for a graph with {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },

    #[error("{nodes} nodes to enumerate; exact enumeration is capped at {limit}")]
    GraphTooLarge { nodes: usize, limit: usize },

    #[error("closed form is outside its validity range: {0}")]
    OutOfRange(String),

    #[error("boundary case: {0}")]
    Boundary(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("malformed graph file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
