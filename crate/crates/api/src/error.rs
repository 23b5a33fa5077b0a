use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use occq::cli::manifest::ENGINE_VERSION;
use occq::Error;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDetail {
    pub kind: &'static str,
    pub message: String,
    pub hint: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub seed: Option<u64>,
    pub detail: ErrorDetail,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>, hint: &'static str) -> Self {
        Self {
            status,
            seed: None,
            detail: ErrorDetail { kind, message: message.into(), hint },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_payload", message, "check the request body against GET /schemas")
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("no session `{id}`"),
            "sessions live in memory and may have been evicted; upload the series again",
        )
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "fit_not_usable",
            message,
            "poll GET /fit/{id} until it converges, or refit with more iterations",
        )
    }

    pub fn busy(message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "capacity", message, "retry later")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Unsupported(_) => "unsupported",
        Error::Degenerate(_) => "degenerate",
        Error::Infeasible(_) => "infeasible",
        Error::OutOfRange(_) => "out_of_range",
        Error::InvalidParameter { .. } => "invalid_parameter",
        Error::Config(_) => "invalid_payload",
        Error::Parse { .. } => "parse",
        Error::NonConvergence(_) => "non_convergence",
        Error::Io(_) => "io",
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::Parse { .. } => StatusCode::BAD_REQUEST,
            Error::NonConvergence(_) => StatusCode::CONFLICT,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let hint = match &e {
            Error::Config(_) => "check the request body against GET /schemas",
            Error::Parse { .. } => "fix the uploaded CSV at the reported line and column",
            Error::NonConvergence(_) => "refit with more iterations or tighter priors",
            other => occq::cli::hint(other),
        };
        Self::new(status, kind(&e), e.to_string(), hint)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    engine_version: &'static str,
    seed: Option<u64>,
    error: &'a ErrorDetail,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { engine_version: ENGINE_VERSION, seed: self.seed, error: &self.detail };
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
