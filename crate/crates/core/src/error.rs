//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Failure modes of the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A vector had the wrong number of entries for the operation.
    Dimension { expected: usize, got: usize },
    /// An input value lies outside the mathematical domain of the operation.
    Domain(String),
    /// An experiment description failed validation.
    InvalidSpec(String),
    /// The requested computation is not available for this configuration.
    Unsupported(String),
    /// Too few events survived to form the requested estimate.
    InsufficientData(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { expected, got } => {
                write!(f, "dimension mismatch: expected {expected} entries, got {got}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidSpec(msg) => write!(f, "invalid experiment spec: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
