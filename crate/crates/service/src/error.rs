use axum::extract::rejection::QueryRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use examforge::bank::BankError;
use examforge::composer::RenderError;
use examforge::session::SessionError;
use examforge::SelectionError;
use serde::Serialize;
use serde_json::Value;

/// Error body returned by every endpoint:
/// `{"machine_code": "...", "message": "...", "details": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub machine_code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Serialize)]
struct Body<'a> {
    machine_code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Value::is_null")]
    details: &'a Value,
}

impl ApiError {
    pub fn new(status: StatusCode, machine_code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            machine_code,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn with_details(mut self, details: impl Serialize) -> Self {
        self.details = serde_json::to_value(details).unwrap_or(Value::Null);
        self
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.machine_code, "{}", self.message);
        }
        let body = Body {
            machine_code: self.machine_code,
            message: &self.message,
            details: &self.details,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<BankError> for ApiError {
    fn from(err: BankError) -> Self {
        use StatusCode as S;
        let message = err.to_string();
        match err {
            BankError::UnknownSubarea(code) => {
                ApiError::new(S::BAD_REQUEST, "unknown_subarea", message).with_details(code)
            }
            BankError::UnknownProblem(id) => {
                ApiError::new(S::NOT_FOUND, "unknown_problem", message).with_details(id)
            }
            BankError::NonMonotoneDate { .. } => {
                ApiError::new(S::CONFLICT, "non_monotone_date", message)
            }
            BankError::Conflict => ApiError::new(S::CONFLICT, "bank_conflict", message),
            BankError::Invalid(report) => {
                ApiError::new(S::INTERNAL_SERVER_ERROR, "bank_invalid", message)
                    .with_details(report)
            }
            _ => ApiError::new(S::INTERNAL_SERVER_ERROR, "bank_unavailable", message),
        }
    }
}

impl From<SelectionError> for ApiError {
    fn from(err: SelectionError) -> Self {
        SessionError::from(err).into()
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        use StatusCode as S;
        let message = err.to_string();
        match err {
            SessionError::Terminal(status) => {
                ApiError::new(S::CONFLICT, "terminal_state", message).with_details(status)
            }
            SessionError::NoDraft => ApiError::new(S::CONFLICT, "no_draft", message),
            SessionError::Blueprint(_) => {
                ApiError::new(S::BAD_REQUEST, "invalid_blueprint", message)
            }
            SessionError::Decision(_) => {
                ApiError::new(S::BAD_REQUEST, "invalid_decision_vector", message)
            }
            SessionError::Selection(SelectionError::UnknownProblem(id)) => {
                ApiError::new(S::NOT_FOUND, "unknown_problem", message).with_details(id)
            }
            SessionError::Selection(_) => {
                ApiError::new(S::UNPROCESSABLE_ENTITY, "selection_failed", message)
            }
            SessionError::Bank(e) => e.into(),
            SessionError::NotFound(id) => {
                ApiError::new(S::NOT_FOUND, "session_not_found", message).with_details(id)
            }
            SessionError::AlreadyExists(id) => {
                ApiError::new(S::CONFLICT, "session_exists", message).with_details(id)
            }
            SessionError::InvalidId(_) => {
                ApiError::new(S::BAD_REQUEST, "invalid_session_id", message)
            }
            SessionError::Transcript { .. } => {
                ApiError::new(S::INTERNAL_SERVER_ERROR, "transcript_corrupt", message)
            }
            SessionError::Io { .. } => ApiError::new(S::INTERNAL_SERVER_ERROR, "io_error", message),
            SessionError::ReplayMismatch { step_number } => {
                ApiError::new(S::INTERNAL_SERVER_ERROR, "replay_mismatch", message)
                    .with_details(step_number)
            }
        }
    }
}

impl From<RenderError> for ApiError {
    fn from(err: RenderError) -> Self {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "render_failed",
            err.to_string(),
        )
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rej: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", rej.body_text())
    }
}
