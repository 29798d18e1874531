use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RangeError {
    #[error("{value:e} overflows {format}")]
    Overflow { value: f64, format: String },
    #[error("{value:e} underflows into the subnormal range of {format}")]
    Underflow { value: f64, format: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Range(#[from] RangeError),
    #[error("invalid format: {0}")]
    InvalidFormat(String),
    #[error("{value:e} is not representable in {format}")]
    NotRepresentable { value: f64, format: String },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("trace does not fit this expression: {0}")]
    TraceMismatch(String),
    #[error("exact sum is zero")]
    ZeroSum,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
