use thiserror::Error;

/// Errors raised by the lattice, operator, form and weight routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid exponent: {0}")]
    Exponent(String),
    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("construction failure: {0}")]
    Construction(String),
    #[error("inconsistent evaluation: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
