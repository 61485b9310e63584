use thiserror::Error;

/// Errors raised by constructors and checks across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what}: truncated mass {mass:.3e} exceeds tolerance {tol:.3e}")]
    TruncationExceeded { what: &'static str, mass: f64, tol: f64 },
    #[error("outside validated range: {0}")]
    OutOfRange(String),
    #[error("enumeration guard exceeded: {0}")]
    Guard(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
