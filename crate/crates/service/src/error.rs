//! JSON error bodies: `{code, message, detail}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use kanmat_core::dataset::DatasetError;
use kanmat_core::matrix::MatrixError;
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id:?}"))
            .with_detail(json!({ what: id }))
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    /// A CSV upload that failed to parse.
    pub fn parse(e: &DatasetError) -> Self {
        let detail = match e {
            DatasetError::NonNumeric { row, column, value } => {
                json!({ "row": row, "column": column, "value": value })
            }
            DatasetError::MissingValue { row, column } => json!({ "row": row, "column": column }),
            DatasetError::RaggedRow { row, .. } => json!({ "row": row }),
            DatasetError::DuplicateColumn(c) => json!({ "column": c }),
            DatasetError::EmptyColumnName(position) => json!({ "position": position }),
            _ => Value::Null,
        };
        Self::new(StatusCode::BAD_REQUEST, "parse_error", e.to_string()).with_detail(detail)
    }

    pub fn transform(e: &DatasetError) -> Self {
        Self::unprocessable("invalid_transform", e.to_string())
    }

    pub fn matrix(e: &MatrixError) -> Self {
        let code = match e {
            MatrixError::InvalidConfig(_) => "invalid_config",
            MatrixError::UnknownColumn(_) => "unknown_column",
            _ => "compute_failed",
        };
        Self::unprocessable(code, e.to_string())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}
