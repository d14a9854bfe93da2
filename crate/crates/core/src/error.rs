use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported path: {0}")]
    UnsupportedPath(String),
    #[error("semantics error: {0}")]
    Semantics(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("horizon {horizon} reached before escape (partial value {partial})")]
    HorizonExceeded { horizon: f64, partial: f64 },
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
