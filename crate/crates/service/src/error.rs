use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// One problem with one submitted box.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub index: Option<usize>,
    pub id: Option<String>,
    pub field: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("validation failed: {message}")]
    Validation {
        message: String,
        diagnostics: Vec<Diagnostic>,
    },
    /// Frame files exist but cannot be read or parsed.
    #[error("unreadable frame data: {0}")]
    UpstreamData(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn validation(message: impl Into<String>) -> Self {
        ServiceError::Validation {
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }

    fn code(&self) -> (&'static str, StatusCode) {
        match self {
            ServiceError::NotFound(_) => ("not_found", StatusCode::NOT_FOUND),
            ServiceError::Validation { .. } => ("validation", StatusCode::UNPROCESSABLE_ENTITY),
            ServiceError::UpstreamData(_) => ("upstream_data", StatusCode::INTERNAL_SERVER_ERROR),
            ServiceError::Config(_) => ("config", StatusCode::INTERNAL_SERVER_ERROR),
            ServiceError::Internal(_) => ("internal", StatusCode::INTERNAL_SERVER_ERROR),
        }
    }
}

impl From<palf_core::Error> for ServiceError {
    fn from(e: palf_core::Error) -> Self {
        match e {
            palf_core::Error::Validation { field, message } => ServiceError::Validation {
                message: format!("invalid {field}: {message}"),
                diagnostics: vec![Diagnostic {
                    index: None,
                    id: None,
                    field,
                    message,
                }],
            },
            other => ServiceError::UpstreamData(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "<[Diagnostic]>::is_empty")]
    diagnostics: &'a [Diagnostic],
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (code, status) = self.code();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        let diagnostics = match &self {
            ServiceError::Validation { diagnostics, .. } => diagnostics.as_slice(),
            _ => &[],
        };
        let body = ErrorBody {
            error: code,
            message: self.to_string(),
            diagnostics,
        };
        (status, Json(body)).into_response()
    }
}
