use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("vertex {vertex} out of range for graph of {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("no {side} blocking run within {limit} steps of vertex {vertex}")]
    ScanLimitExceeded {
        vertex: usize,
        side: &'static str,
        limit: usize,
    },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no collapse found: {0}")]
    NoCollapse(String),

    #[error("cell (k={k}, c={c}, n={n}) failed: {source}")]
    Cell {
        k: usize,
        c: f64,
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
