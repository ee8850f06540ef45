use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown scene \"{0}\"")]
    UnknownScene(String),
    #[error("unknown object {object_id} in scene \"{scene_id}\"")]
    UnknownObject { scene_id: String, object_id: u32 },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{stage} stage unavailable: {reason}")]
    StageUnavailable { stage: &'static str, reason: String },
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error(transparent)]
    Core(#[from] qsr_core::Error),
    #[error(transparent)]
    Synth(#[from] qsr_synth::SynthError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        use qsr_core::Error as E;
        match self {
            ServiceError::Config(_) => "config",
            ServiceError::UnknownScene(_) => "unknown_scene",
            ServiceError::UnknownObject { .. } => "unknown_object",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::StageUnavailable { .. } => "stage_unavailable",
            ServiceError::ProviderUnavailable(_) => "provider_unavailable",
            ServiceError::Core(e) => match e {
                E::GoalUnreachable => "goal_unreachable",
                E::PathNotFound => "path_not_found",
                E::StartBlocked => "start_blocked",
                E::BadRequest(_) | E::InvalidParameter(_) => "bad_request",
                E::Provider(_) => "provider_unavailable",
                E::GraphParse(_) => "graph_parse",
                _ => "internal",
            },
            ServiceError::Synth(_) => "recipe",
            ServiceError::Io(_) | ServiceError::Json(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code() {
            "unknown_scene" | "unknown_object" | "not_found" => StatusCode::NOT_FOUND,
            "bad_request" | "graph_parse" | "recipe" => StatusCode::BAD_REQUEST,
            "goal_unreachable" | "path_not_found" | "start_blocked" => StatusCode::UNPROCESSABLE_ENTITY,
            "stage_unavailable" | "provider_unavailable" => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize)]
pub struct ErrorDetail {
    pub code: &'static str,
    pub status: u16,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code(),
                status: status.as_u16(),
                message: self.to_string(),
            },
        };
        (status, Json(body)).into_response()
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;
