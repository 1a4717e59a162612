use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use atd_core::ingest::IngestError;
use atd_core::layering::LayeringError;
use atd_core::store::StoreError;
use atd_core::trace::Violation;

/// Every non-2xx response body: `{code, message}` plus optional detail.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<Violation>>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            line: None,
            violations: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn bad_filter(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_filter", message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }

    fn violations(v: Vec<Violation>, message: String) -> Self {
        Self {
            violations: Some(v),
            ..Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation_failed",
                message,
            )
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

/// Errors from reading a stored case.
impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::InvalidCaseId(_) => {
                ApiError::not_found("case_not_found", e.to_string())
            }
            StoreError::DuplicateCase(_) => {
                ApiError::new(StatusCode::CONFLICT, "duplicate_case", e.to_string())
            }
            StoreError::IoFailure { .. } | StoreError::CorruptDocument { .. } => {
                ApiError::internal(e.to_string())
            }
        }
    }
}

/// Errors from ingesting a new case.
impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let message = e.to_string();
        match e {
            IngestError::Parse(p) => Self {
                line: p.line(),
                ..ApiError::new(StatusCode::BAD_REQUEST, p.code(), message)
            },
            IngestError::Adapt(a) => Self {
                line: a.line(),
                ..ApiError::new(StatusCode::BAD_REQUEST, a.code(), message)
            },
            IngestError::Invalid(v) => ApiError::violations(v, message),
            IngestError::Analysis(LayeringError::InvalidTrace(v)) => {
                ApiError::violations(v, message)
            }
            IngestError::Analysis(LayeringError::NoPlanFound) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_plan_found", message)
            }
            IngestError::Analysis(_) => ApiError::internal(message),
            IngestError::Store(StoreError::InvalidCaseId(_)) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_case_id", message)
            }
            IngestError::Store(s) => s.into(),
        }
    }
}
