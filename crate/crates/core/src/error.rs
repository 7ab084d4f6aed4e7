use thiserror::Error;

/// Errors shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or lattice setup that the requested operation cannot accept
    /// (stability bound, dense-size guard, malformed spec).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-side precondition was violated (e.g. an unpinned field).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numerical routine failed (singular factorization, quadrature
    /// that did not converge).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed serialized input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
