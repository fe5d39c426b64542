use thiserror::Error;

/// Errors produced by the library.
///
/// The variants follow the failure classes used throughout the crate so that
/// front ends can map them onto stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes: dimension or length mismatches, bad indices.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument is outside of its admissible range.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Mass or states outside of the admissible state domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects that were supposed to be coupled do not match.
    #[error("coupling error: {0}")]
    Coupling(String),

    /// A configured size cap was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The integration or solver configuration is not admissible.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A numerical procedure failed (non-convergence, step size too large).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
