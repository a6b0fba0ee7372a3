use thiserror::Error;

/// Errors raised by the risk-envelope library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} atoms, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid probability space: {0}")]
    InvalidSpace(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid measure specification: {0}")]
    InvalidSpec(String),

    #[error("linear system is infeasible")]
    Infeasible,

    #[error("risk envelope is empty")]
    EmptyEnvelope,

    #[error("intersection of risk envelopes is empty; no coherent measure has this inf-convolution")]
    EmptyIntersection,

    #[error("envelope is not polyhedral (mean-deviation ball)")]
    NotPolyhedral,

    #[error("representation unsupported: {0}")]
    RepresentationUnsupported(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("input is constant; the mean-deviation maximizer is undefined")]
    ConstantInput,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
