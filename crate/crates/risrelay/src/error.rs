use thiserror::Error;

/// Errors produced by scenario generation and the solvers.
#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
