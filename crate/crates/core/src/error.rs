use thiserror::Error;

use crate::gridmap::GridGeometry;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("geometry mismatch: {left} vs {right}")]
    GeometryMismatch {
        left: GridGeometry,
        right: GridGeometry,
    },

    #[error("record {index}: coordinate ({x}, {y}) {reason}")]
    BadCoordinate {
        index: usize,
        x: u32,
        y: u32,
        reason: &'static str,
    },

    #[error("record {index}: duplicate prediction for cell (row {row}, col {col})")]
    DuplicateCell { index: usize, row: usize, col: usize },

    #[error("record {index}: probability {prob} outside [0, 1]")]
    BadProbability { index: usize, prob: f64 },

    #[error("malformed map: {0}")]
    MalformedMap(String),

    #[error("no positive patches to sample around")]
    NoPositives,

    #[error("estimate undefined: {0}")]
    UndefinedEstimate(String),

    #[error("AUC undefined: need at least one positive and one negative label")]
    UndefinedAuc,

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
