//! Error type shared across the crate, with a stable mapping to CLI exit codes.

/// Crate-wide error. The three variants correspond to the CLI exit-code
/// classes: invalid parameters/configuration (2), malformed input data (3)
/// and numerical failures (4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 2,
            Error::Data(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

pub(crate) fn data_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Data(msg.into()))
}

pub(crate) fn numerical_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Numerical(msg.into()))
}
