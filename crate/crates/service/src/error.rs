// SPDX-License-Identifier: MIT OR Apache-2.0

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use goalscope_core::interventions::InterventionError;
use goalscope_core::maze::{Invariant, MazeError};
use goalscope_core::metrics::MetricsError;
use goalscope_core::net::NetError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    /// Body is not JSON or does not have the request's shape.
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("edit violates the maze invariant `{0}`")]
    Invariant(Invariant),
    #[error("unknown delta id `{0}`")]
    UnknownDelta(String),
    /// Well-formed request the domain rejects.
    #[error("{0}")]
    Domain(String),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Error body returned with every non-2xx status.
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariant: Option<Invariant>,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Malformed(_) => StatusCode::BAD_REQUEST,
            ApiError::Invariant(_) | ApiError::Domain(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::UnknownDelta(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ApiError::Malformed(_) => "malformed",
            ApiError::Invariant(_) => "invariant_violation",
            ApiError::UnknownDelta(_) => "unknown_delta",
            ApiError::Domain(_) => "domain",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let invariant = match self {
            ApiError::Invariant(i) => Some(i),
            _ => None,
        };
        let body = ErrorBody { error: self.kind(), message: self.to_string(), invariant };
        (self.status(), Json(body)).into_response()
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::Malformed(e.to_string())
    }
}

impl From<MazeError> for ApiError {
    fn from(e: MazeError) -> Self {
        match e {
            MazeError::EditBreaksTreeInvariant(i) => ApiError::Invariant(i),
            MazeError::Malformed(m) => ApiError::Malformed(m),
            e => ApiError::Domain(e.to_string()),
        }
    }
}

impl From<NetError> for ApiError {
    fn from(e: NetError) -> Self {
        ApiError::Domain(e.to_string())
    }
}

impl From<InterventionError> for ApiError {
    fn from(e: InterventionError) -> Self {
        match e {
            InterventionError::UnknownRef(r) => ApiError::UnknownDelta(r),
            InterventionError::InvalidAtom(m) => ApiError::Malformed(m),
            InterventionError::Maze(e) => e.into(),
            InterventionError::Net(e) => e.into(),
            e @ InterventionError::NoCheese => ApiError::Domain(e.to_string()),
        }
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Maze(e) => e.into(),
            MetricsError::Net(e) => e.into(),
            e => ApiError::Domain(e.to_string()),
        }
    }
}
