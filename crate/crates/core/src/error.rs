use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtfsError {
    #[error("input shape error: {0}")]
    InputShape(String),
    #[error("input range error: {0}")]
    InputRange(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("undefined result: {0}")]
    Undefined(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, OtfsError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(OtfsError::InputShape(msg.into()))
}
