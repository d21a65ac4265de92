use thiserror::Error;

pub type Result<T, E = AtlasError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("{0} not found")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Core(#[from] tilmap_core::Error),

    #[error("storage: {0}")]
    Io(#[from] std::io::Error),

    #[error("encoding: {0}")]
    Image(#[from] image::ImageError),
}

impl AtlasError {
    /// Stable machine-readable code for API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            AtlasError::NotFound(_) => "not_found",
            AtlasError::Conflict(_) => "conflict",
            AtlasError::BadRequest(_) => "invalid_argument",
            AtlasError::Parse { .. } => "parse_error",
            AtlasError::Core(tilmap_core::Error::GeometryMismatch { .. }) => "geometry_mismatch",
            AtlasError::Core(tilmap_core::Error::Parse { .. }) => "parse_error",
            AtlasError::Core(_) => "invalid_argument",
            AtlasError::Io(_) | AtlasError::Image(_) => "internal",
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        AtlasError::Parse {
            line,
            message: message.into(),
        }
    }
}
