use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use vlab_core::scheme::ValidationReport;

use crate::store::StoreError;

/// A failed request; each variant has one HTTP status.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApiError {
    /// 401
    #[error("{0}")]
    Unauthenticated(String),
    /// 403
    #[error("{0}")]
    Forbidden(String),
    /// 404
    #[error("{0}")]
    NotFound(String),
    /// 409
    #[error("{0}")]
    Conflict(String),
    /// 422, with a structured violation list.
    #[error("{message}")]
    Invalid {
        message: String,
        violations: Vec<Value>,
    },
    /// 500
    #[error("{0}")]
    Internal(String),
}

/// One rejected field of a request body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldViolation {
    pub field: String,
    pub message: String,
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::Unauthenticated(_) => 401,
            ApiError::Forbidden(_) => 403,
            ApiError::NotFound(_) => 404,
            ApiError::Conflict(_) => 409,
            ApiError::Invalid { .. } => 422,
            ApiError::Internal(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Unauthenticated(_) => "unauthenticated",
            ApiError::Forbidden(_) => "forbidden",
            ApiError::NotFound(_) => "not_found",
            ApiError::Conflict(_) => "conflict",
            ApiError::Invalid { .. } => "invalid",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        ApiError::Invalid {
            message: format!("{field}: {message}"),
            violations: vec![json!(FieldViolation {
                field: field.into(),
                message,
            })],
        }
    }

    pub fn fields(violations: Vec<FieldViolation>) -> Self {
        let message = violations
            .iter()
            .map(|v| format!("{}: {}", v.field, v.message))
            .collect::<Vec<_>>()
            .join("; ");
        ApiError::Invalid {
            message,
            violations: violations.iter().map(|v| json!(v)).collect(),
        }
    }

    pub fn report(report: &ValidationReport) -> Self {
        ApiError::Invalid {
            message: format!("invalid config: {report}"),
            violations: report.violations.iter().map(|v| json!(v)).collect(),
        }
    }

    pub fn body(&self) -> Value {
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        if let ApiError::Invalid { violations, .. } = self {
            body["violations"] = Value::Array(violations.clone());
        }
        body
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
