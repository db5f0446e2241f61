use thiserror::Error;

/// Errors surfaced by the library.
///
/// Contract violations indicate a bug in the caller or in an interpreter,
/// never a property of the protocol under study; protocol defects (mutual
/// exclusion breaches, deadlocks, starvation) are reported as data, not
/// errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("malformed protocol: {0}")]
    MalformedProtocol(String),

    #[error("runtime environment: {0}")]
    RuntimeEnvironment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
