use thiserror::Error;

/// Errors raised across the attribution engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input shape mismatch: expected {expected} features, found {found}")]
    InputShape { expected: usize, found: usize },

    #[error("shape {shape:?} does not describe {len} values")]
    ShapeMetadata { shape: Vec<usize>, len: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("numeric overflow: non-finite value produced by node {node}")]
    NumericOverflow { node: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("unsupported model file: {0}")]
    Version(String),

    #[error("norm ratio undefined: denominator attribution has zero norm")]
    UndefinedRatio,

    #[error("cosine similarity undefined: an attribution has zero norm")]
    UndefinedSimilarity,

    #[error("sensitivity undefined: attribution at the input has zero norm")]
    UndefinedSensitivity,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
