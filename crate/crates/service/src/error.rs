use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};
use wwm_core::plugins::PluginError;
use wwm_core::procgen::ParamError;
use wwm_core::wire::ErrorBody;
use wwm_core::DomainError;

/// An error response with the fixed `{code, message, details}` body.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, details: Value) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                details,
            },
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message, Value::Null)
    }

    pub fn unknown_node(node_id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "UnknownNode",
            format!("unknown node {node_id}"),
            json!({ "node_id": node_id }),
        )
    }

    pub fn session_busy(session_id: &str) -> Self {
        ApiError::new(
            StatusCode::CONFLICT,
            "SessionBusy",
            format!("session {session_id} is applying another action"),
            json!({ "session_id": session_id }),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message, Value::Null)
    }
}

impl From<ParamError> for ApiError {
    fn from(e: ParamError) -> Self {
        let details = match e {
            ParamError::IllegalDensity(v) => json!({ "density": v }),
            ParamError::IllegalGalaxyCount(v) => json!({ "galaxies": v }),
            ParamError::IllegalSystemCount(v) => json!({ "systems": v }),
        };
        ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string(), details)
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let details = serde_json::to_value(&e).unwrap_or(Value::Null);
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string(), details)
    }
}

impl From<PluginError> for ApiError {
    fn from(e: PluginError) -> Self {
        let status = match e {
            PluginError::UnknownPlugin(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let code = match e {
            PluginError::UnknownPlugin(_) => "UnknownPlugin",
            PluginError::Duplicate(_) => "DuplicatePlugin",
            PluginError::SchemaNotRegistered { .. } => "SchemaNotRegistered",
            PluginError::SchemaConflict { .. } => "SchemaConflict",
        };
        ApiError::new(status, code, e.to_string(), Value::Null)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
