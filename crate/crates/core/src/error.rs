use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown keypoint id: {0}")]
    UnknownKeypoint(String),

    #[error("unknown feature name: {0}")]
    UnknownFeature(String),

    #[error("all samples missing for keypoint {0}")]
    AllMissing(String),

    #[error("flat recording: distance signal has zero range")]
    FlatRecording,

    #[error("signal already mean-removed")]
    AlreadyMeanRemoved,

    #[error("unanalyzable recording: {0}")]
    Unanalyzable(String),

    #[error("insufficient vertices: need at least 2 peaks and 2 troughs, got {peaks} peaks and {troughs} troughs")]
    InsufficientVertices { peaks: usize, troughs: usize },

    #[error("non-positive inter-vertex interval at {at:.6} s")]
    NonPositiveInterval { at: f64 },

    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
