use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),
    #[error("invalid camera frame {frame_id}: {reason}")]
    InvalidFrame { frame_id: u32, reason: String },
    #[error("mask shape mismatch: expected {expected:?}, got {actual:?}")]
    MaskShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("no semantic masks supplied")]
    NoSemanticMasks,
    #[error("no camera frames supplied")]
    NoFrames,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no views supplied for captioning")]
    NoViews,
    #[error("caption unavailable for object {0}: {1}")]
    CaptionUnavailable(u32, String),
    #[error("attribute parse error: {0}")]
    AttributeParse(String),
    #[error("id mismatch: {0}")]
    IdMismatch(String),
    #[error("scene graph parse error: {0}")]
    GraphParse(String),
    #[error("object {0} is not visible in any frame")]
    NoVisibleViews(u32),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding index is empty")]
    EmptyIndex,
    #[error("index format error: {0}")]
    IndexFormat(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),
    #[error("no free goal cell near the target")]
    GoalUnreachable,
    #[error("no path between start and goal")]
    PathNotFound,
    #[error("start position is blocked and cannot be snapped to free space")]
    StartBlocked,
    #[error("provider error: {0}")]
    Provider(String),
    #[error("bundle error in {file}: {reason}")]
    Bundle { file: String, reason: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn bundle(file: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Bundle {
            file: file.into(),
            reason: reason.into(),
        }
    }

    pub fn provider(msg: impl std::fmt::Display) -> Self {
        Error::Provider(msg.to_string())
    }
}
