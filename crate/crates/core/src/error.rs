use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("edge {edge} references node {node} but the graph has {node_count} nodes")]
    NodeOutOfRange {
        edge: usize,
        node: usize,
        node_count: usize,
    },
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("edge {edge} is ({r}, {s}); endpoints must be listed low to high")]
    Misoriented { edge: usize, r: usize, s: usize },
    #[error("edge {edge} duplicates ({r}, {s})")]
    DuplicateEdge { edge: usize, r: usize, s: usize },
    #[error("graph is disconnected: node {node} cannot reach the destination")]
    Disconnected { node: usize },
    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("traffic at node {node} is {value}; it must be finite and non-negative")]
    InvalidTraffic { node: usize, value: f64 },
    #[error("no node generates traffic")]
    NoTraffic,
    #[error("cut-set is empty")]
    EmptyCut,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("exponent p must be a finite number greater than 1, got {0}")]
    InvalidExponent(f64),
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
    #[error("starting flow violates conservation by {0:e}")]
    Infeasible(f64),
    #[error("cycle search space has dimension {0}; at most 2 is supported")]
    SearchTooLarge(usize),
}
