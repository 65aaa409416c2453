use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),

    #[error("rejection budget exhausted after {0} attempts")]
    RejectionBudgetExhausted(usize),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("chain is not reversible")]
    NotReversible,

    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid point for {space}: {msg}")]
    InvalidPoint { space: String, msg: String },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid cover: {0}")]
    InvalidCover(String),

    #[error("padding certification failed: {0}")]
    PaddingCertification(String),

    #[error("unknown letter {0:?}")]
    UnknownLetter(char),

    #[error("vertices {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),

    #[error("walk length {q} requires girth > {needed}, graph girth is {girth}")]
    GirthTooSmall { q: usize, needed: usize, girth: String },

    #[error("invalid group action: {0}")]
    InvalidAction(String),

    #[error("prerequisite not met: {0}")]
    Prerequisite(String),

    #[error("invariant violated: {0}")]
    InvariantViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
