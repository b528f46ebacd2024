use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Validation,
    SchemaViolation,
    UnknownStudy,
    UnknownSession,
    StepMismatch,
    DuplicateStep,
    AlreadyCompleted,
    Conflict,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::Validation | ErrorCode::SchemaViolation => StatusCode::BAD_REQUEST,
            ErrorCode::UnknownStudy | ErrorCode::UnknownSession => StatusCode::NOT_FOUND,
            ErrorCode::StepMismatch | ErrorCode::DuplicateStep | ErrorCode::AlreadyCompleted | ErrorCode::Conflict => {
                StatusCode::CONFLICT
            }
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            field: None,
            message: message.into(),
        }
    }

    pub fn unknown_study(id: &str) -> Self {
        Self::new(ErrorCode::UnknownStudy, format!("no study `{id}`"))
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(ErrorCode::UnknownSession, format!("no session `{id}`"))
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(ErrorCode::Internal, e.to_string())
    }

    /// Converts a core error, keeping the field path of validation errors
    /// under `prefix`.
    pub fn from_core(code: ErrorCode, prefix: &str, e: belief_core::Error) -> Self {
        match e {
            belief_core::Error::Validation { field, reason } => ApiError {
                code,
                field: Some(join(prefix, &field)),
                message: reason,
            },
            other => ApiError {
                code,
                field: (!prefix.is_empty()).then(|| prefix.to_string()),
                message: other.to_string(),
            },
        }
    }
}

fn join(prefix: &str, field: &str) -> String {
    match (prefix.is_empty(), field.is_empty()) {
        (true, _) => field.to_string(),
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}.{field}"),
    }
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a ApiError,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(Body { error: &self })).into_response()
    }
}

/// Deserializes a JSON body, reporting the path of the offending field.
pub fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError {
            code: ErrorCode::SchemaViolation,
            field: (path != ".").then_some(path),
            message: e.into_inner().to_string(),
        }
    })
}
