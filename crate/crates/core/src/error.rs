use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("quadrature failed to converge: value {value:e}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },
    #[error("data not admissible: {0}")]
    Inadmissible(String),
    #[error("node sets differ: {0}")]
    NodeMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
