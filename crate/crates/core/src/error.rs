use thiserror::Error;

/// Errors raised by the numerical pipeline.
///
/// Catalog violations are not errors; see [`crate::catalog::ValidationReport`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("catalog has no systems")]
    EmptyCatalog,

    #[error("catalog is invalid: {0}")]
    InvalidCatalog(String),

    #[error("tree would have {nodes} nodes, above the cap of {cap}")]
    TreeTooLarge { nodes: u64, cap: u64 },

    #[error("tree depth exhausted: {what}; at least {additional_levels} more level(s) needed")]
    DepthExhausted { what: String, additional_levels: usize },

    #[error("no neck within {cap} environments")]
    NeckTimeout { cap: usize },

    #[error("index {index} out of range (len {len})")]
    IndexError { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    ArgumentError(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mass matrix is singular at node {node}")]
    SingularMass { node: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("root is not resolvable from noise: gamma in [{lo}, {hi}]")]
    NoisyRoot { lo: f64, hi: f64 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
