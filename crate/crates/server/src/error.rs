use aesthevo::pollhub::HubError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

/// JSON error body `{code, message}` with its HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }

    pub fn rate_limited() -> Self {
        Self::new(StatusCode::TOO_MANY_REQUESTS, "RateLimited", "submission limit reached, try again later")
    }
}

/// HTTP status of each hub error.
pub fn status_of(err: &HubError) -> StatusCode {
    match err {
        HubError::InvalidMap(_) => StatusCode::BAD_REQUEST,
        HubError::UnknownTileset(_) | HubError::NoOpenPoll | HubError::UnknownPoll(_) | HubError::UnknownMap(_) => {
            StatusCode::NOT_FOUND
        }
        HubError::PollClosed(_)
        | HubError::AlreadyVoted(_)
        | HubError::NotYetClosable(_)
        | HubError::PollStillOpen(_)
        | HubError::IllegalTransition(_)
        | HubError::MapInOpenPoll(_)
        | HubError::NoEligibleMaps(_) => StatusCode::CONFLICT,
        HubError::Unauthorized => StatusCode::UNAUTHORIZED,
        HubError::Apm(_) | HubError::Evolve(_) | HubError::Render(_) | HubError::Log(_) | HubError::Io(_) => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl From<HubError> for ApiError {
    fn from(err: HubError) -> Self {
        ApiError::new(status_of(&err), err.code(), err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
