use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the augmentation library.
#[derive(Debug, Error)]
pub enum GenMixError {
    #[error("{path}:{line}: malformed manifest line: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate manifest id {0:?}")]
    DuplicateId(String),
    #[error("invalid record for source {source_id:?}: {message}")]
    InvalidRecord { source_id: String, message: String },
    #[error("failed to decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },
    #[error("image has zero dimension ({width}x{height})")]
    EmptyImage { width: usize, height: usize },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("blend width {blend_width} exceeds image extent {extent}")]
    BlendWidthTooLarge { blend_width: usize, extent: usize },
    #[error("patch rectangle {0:?} does not fit inside the image")]
    PatchOutOfBounds(crate::mask::PatchRect),
    #[error("lambda {0} outside [0, 1)")]
    LambdaOutOfRange(f64),
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("no precomputed edit for ({source_id}, {prompt_id})")]
    MissingEdit {
        source_id: String,
        prompt_id: String,
    },
    #[error("backend {backend} unhealthy: {message}")]
    Unhealthy { backend: String, message: String },
    #[error("backend request failed (retryable): {0}")]
    Transient(String),
    #[error("backend returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("embedding dimension mismatch: {0} vs {1}")]
    EmbeddingDimension(usize, usize),
    #[error("embedding has zero norm or non-finite entries")]
    DegenerateEmbedding,
    #[error("threshold needs at least 2 originals, got {0}")]
    TooFewOriginals(usize),
    #[error("invalid IFS spec {name:?}: {message}")]
    InvalidIfs { name: String, message: String },
    #[error("no fractal images found in {0}")]
    NoFractals(PathBuf),
    #[error("baseline time must be positive, got {0}")]
    NonPositiveBaseline(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GenMixError {
    /// Whether retrying the same request might succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            GenMixError::Transient(_) => true,
            GenMixError::HttpStatus { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub type Result<T, E = GenMixError> = std::result::Result<T, E>;
