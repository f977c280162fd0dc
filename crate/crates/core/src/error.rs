use thiserror::Error;

/// Errors produced across the optimizer, solver and experiment layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("point {0:?} is not on the parameter grid")]
    OffGrid(Vec<f64>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("unreachable target: {0}")]
    Unreachable(String),
    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
