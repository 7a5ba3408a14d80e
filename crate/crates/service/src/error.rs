use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use batchshop::eval::Violation;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, error, message: message.into(), violations: Vec::new() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn unprocessable(error: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, error, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<batchshop::Error> for ApiError {
    fn from(e: batchshop::Error) -> Self {
        use batchshop::Error as E;
        match e {
            E::Parse(_) | E::InvalidInstance { .. } | E::UnknownArticle(_) | E::Domain(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", e.to_string())
            }
            E::Mismatch(msg) => ApiError::unprocessable("incompatible", msg),
            E::GuardExceeded(_) => ApiError::unprocessable("guard_exceeded", e.to_string()),
            E::InvalidSchedule(v) => {
                let mut err = ApiError::unprocessable("invalid_schedule", format!("schedule has {} violation(s)", v.len()));
                err.violations = v;
                err
            }
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}
