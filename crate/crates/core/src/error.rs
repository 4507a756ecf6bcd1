use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate word position (page {page}, line {line}, pos {pos})")]
    DuplicatePosition { page: usize, line: usize, pos: usize },
    #[error("line indices on page {page} are not contiguous from 0 (found line {line})")]
    NonContiguousLines { page: usize, line: usize },
    #[error("invalid word at {path}: {reason}")]
    InvalidWord { path: String, reason: String },
    #[error("document contains no words")]
    EmptyDocument,
    #[error("invalid bounding box at {path}: {reason}")]
    InvalidBox { path: String, reason: String },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed hOCR at {path}: {reason}")]
    Hocr { path: String, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty validation set")]
    EmptyValidationSet,
    #[error("empty sequence")]
    EmptySequence,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("invalid value {value:?} for field {field}")]
    InvalidFieldValue { field: String, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
