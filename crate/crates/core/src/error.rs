use thiserror::Error;

/// Errors raised by the tensor algebra, solvers, generators and evaluation code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StpcaError {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("invalid direction set: {0}")]
    Direction(String),
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("slice {slice}: {source}")]
    Slice {
        slice: usize,
        #[source]
        source: Box<StpcaError>,
    },
    #[error("i/o: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl StpcaError {
    /// True for failures caused by non-finite values or a diverging solve.
    pub fn is_numerical(&self) -> bool {
        match self {
            StpcaError::Numerical(_) | StpcaError::Singular(_) => true,
            StpcaError::Slice { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for StpcaError {
    fn from(e: std::io::Error) -> Self {
        StpcaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, StpcaError>;
