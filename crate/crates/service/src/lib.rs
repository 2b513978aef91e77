// SPDX-License-Identifier: MIT OR Apache-2.0

//! HTTP facade over `goalscope-core`.
//!
//! Every endpoint takes a self-contained JSON body and answers with an
//! [`Envelope`] carrying a hash of the request, so clients can cache by it.
//! The only server-side state besides the network is a content-addressed
//! store of steering vectors, which later requests name by id.

pub mod api;
pub mod error;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use goalscope_core::net::{write_gsw1, PolicyNetwork, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::{ApiError, ErrorBody};

/// The served OpenAPI document.
pub const OPENAPI: &str = include_str!("../../../schemas/openapi.json");

/// Successful response body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    /// Hex SHA-256 of the route and the canonical form of the request body.
    pub request_hash: String,
    pub result: T,
}

pub struct AppState {
    pub net: PolicyNetwork,
    pub weights_id: String,
    deltas: RwLock<HashMap<String, Arc<Tensor>>>,
}

impl AppState {
    pub fn new(net: PolicyNetwork, weights_id: impl Into<String>) -> Self {
        Self { net, weights_id: weights_id.into(), deltas: RwLock::default() }
    }

    /// Store a tensor under its content hash and return the id.
    pub fn store(&self, t: Arc<Tensor>) -> String {
        let id = tensor_id(&t);
        self.deltas.write().expect("delta store poisoned").entry(id.clone()).or_insert(t);
        id
    }

    pub fn lookup(&self, id: &str) -> Option<Arc<Tensor>> {
        self.deltas.read().expect("delta store poisoned").get(id).cloned()
    }
}

/// `sha256:` plus the hex digest of the tensor's GSW1 encoding.
pub fn tensor_id(t: &Tensor) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(write_gsw1([("delta", t)]))))
}

/// Hash of a request. `serde_json::Value` keeps object keys sorted, so
/// re-serializing it gives one form for all key orders and spacings.
pub fn request_hash(route: &str, body: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(route.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(body).expect("a JSON value serializes"));
    hex::encode(h.finalize())
}

/// All routes plus CORS. `origin` restricts cross-origin access to one UI
/// origin; `None` allows any.
pub fn router(state: Arc<AppState>, origin: Option<HeaderValue>) -> Router {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    Router::new()
        .route("/health", get(api::health))
        .route("/openapi.json", get(api::openapi))
        .route("/maze/generate", post(api::maze_generate))
        .route("/maze/edit", post(api::maze_edit))
        .route("/policy/field", post(api::policy_field))
        .route("/policy/activations", post(api::policy_activations))
        .route("/interventions/cheese_vector", post(api::cheese_vector))
        .route("/interventions/topright_vector", post(api::topright_vector))
        .route("/metrics/path_prob", post(api::path_prob))
        .route("/metrics/heatmap", post(api::heatmap))
        .layer(cors)
        .with_state(state)
}
