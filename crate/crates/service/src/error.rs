//! Service errors and their HTTP mapping.

use std::fmt;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

use scalesmith_core::corpus::{ConstructId, CorpusError};
use scalesmith_core::gateway::GatewayError;
use scalesmith_core::index::IndexError;
use scalesmith_core::recommend::RecommendError;
use scalesmith_core::synthesis::SynthesisError;

use crate::store::StoreError;

/// The synthesis step an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Construct,
    Refine,
    Classify,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step::Construct => "construct",
            Step::Refine => "refine",
            Step::Classify => "classify",
        })
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("construct `{0}` is not part of the current recommendation")]
    UnknownConstruct(ConstructId),
    #[error("{0}")]
    Precondition(String),
    #[error("item index {index} out of range for {len} refined items")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("the construct index is empty; run ingest first")]
    EmptyIndex,
    #[error("{step} step failed: {source}")]
    Synthesis {
        step: Step,
        #[source]
        source: SynthesisError,
    },
    #[error("model gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Store(StoreError),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("internal: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn step(&self) -> Option<Step> {
        match self {
            ServiceError::Synthesis { step, .. } => Some(*step),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Validation(_) => "validation",
            ServiceError::UnknownConstruct(_) => "unknown_construct",
            ServiceError::Precondition(_) => "precondition",
            ServiceError::IndexOutOfRange { .. } => "index_out_of_range",
            ServiceError::EmptyIndex => "empty_index",
            ServiceError::Synthesis { .. } => "synthesis",
            ServiceError::Gateway(_) => "gateway",
            ServiceError::Store(_) | ServiceError::Corpus(_) | ServiceError::Index(_) | ServiceError::Internal(_) => {
                "internal"
            }
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Validation(_) | ServiceError::IndexOutOfRange { .. } => StatusCode::BAD_REQUEST,
            ServiceError::UnknownConstruct(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Precondition(_) => StatusCode::CONFLICT,
            ServiceError::EmptyIndex => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Synthesis { .. } | ServiceError::Gateway(_) => StatusCode::BAD_GATEWAY,
            ServiceError::Store(_) | ServiceError::Corpus(_) | ServiceError::Index(_) | ServiceError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ServiceError::NotFound(format!("project {id}")),
            other => ServiceError::Store(other),
        }
    }
}

impl From<RecommendError> for ServiceError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::Brief(b) => ServiceError::Validation(b.to_string()),
            RecommendError::EmptyIndex => ServiceError::EmptyIndex,
            RecommendError::UnknownSelection(id) => ServiceError::UnknownConstruct(id),
            RecommendError::Gateway(g) => ServiceError::Gateway(g),
            RecommendError::Index(i) => ServiceError::Index(i),
            RecommendError::InvalidK { .. } => ServiceError::Internal(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<Step>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: self.kind(),
            message: self.to_string(),
            step: self.step(),
        };
        (status, Json(body)).into_response()
    }
}
