use thiserror::Error;

/// Errors raised by the simulators, the randomizer and the protocol runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter set that can never be valid (non-prime modulus, `d` too
    /// small for the client count, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The selected backend cannot represent the requested system.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A party deviated from the message flow.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Numerical state corruption (e.g. a state vector with zero norm).
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
