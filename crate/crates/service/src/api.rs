// SPDX-License-Identifier: MIT OR Apache-2.0

//! Request and result types and the route handlers.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::Json;
use goalscope_core::interventions::{
    compute_cheese_vector, compute_top_right_vector, ActivationDelta, InterventionSpec, Provenance, SpecDoc,
};
use goalscope_core::maze::{generate_maze, CheesePlacement, Coord, MazeEdit, MazeState};
use goalscope_core::metrics::{normalized_path_probability, retargetability_heatmap, vector_field, Heatmap, HeatmapCondition, VectorField};
use goalscope_core::net::{ActionDistribution, DEFAULT_TAP};
use goalscope_core::render::render_observation;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{request_hash, ApiError, AppState, Envelope, OPENAPI};

type Shared = State<Arc<AppState>>;

/// Parse, hash, run `f` off the async workers, wrap the result.
async fn handle<Q, R>(
    state: Arc<AppState>,
    route: &'static str,
    body: Bytes,
    f: impl FnOnce(&AppState, Q) -> Result<R, ApiError> + Send + 'static,
) -> Result<Json<Envelope<R>>, ApiError>
where
    Q: DeserializeOwned + Send + 'static,
    R: Serialize + Send + 'static,
{
    let value: serde_json::Value = serde_json::from_slice(&body)?;
    let hash = request_hash(route, &value);
    let req: Q = serde_json::from_value(value)?;
    let result = tokio::task::spawn_blocking(move || f(&state, req))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(Envelope { request_hash: hash, result }))
}

fn default_tap() -> String {
    DEFAULT_TAP.into()
}

fn only_default_tap(tap: &str) -> Result<(), ApiError> {
    if tap == DEFAULT_TAP {
        Ok(())
    } else {
        Err(ApiError::Domain(format!("tap `{tap}` is not exposed; use `{DEFAULT_TAP}`")))
    }
}

fn resolve(state: &AppState, doc: &SpecDoc) -> Result<InterventionSpec, ApiError> {
    for a in &doc.atoms {
        only_default_tap(&a.tap)?;
    }
    Ok(doc.resolve(&state.net, |id| state.lookup(id))?)
}

#[derive(Debug, Serialize)]
pub struct Health {
    pub weights: String,
}

pub async fn health(State(s): Shared) -> Json<Health> {
    Json(Health { weights: s.weights_id.clone() })
}

pub async fn openapi() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

// --- maze ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheeseMode {
    None,
    /// Uniform over free squares, drawn from the maze seed.
    #[default]
    Uniform,
    TopRight,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub seed: u64,
    pub size: usize,
    #[serde(default)]
    pub cheese: CheeseMode,
}

pub async fn maze_generate(State(s): Shared, body: Bytes) -> Result<Json<Envelope<MazeState>>, ApiError> {
    handle(s, "/maze/generate", body, |_, r: GenerateRequest| {
        let m = generate_maze(r.seed, r.size)?;
        let placed = match r.cheese {
            CheeseMode::None => m,
            CheeseMode::Uniform => m.place_cheese(CheesePlacement::Uniform { seed: r.seed })?,
            CheeseMode::TopRight => m.place_cheese(CheesePlacement::TopRight { seed: r.seed })?,
        };
        Ok(placed)
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub maze: MazeState,
    pub edit: MazeEdit,
}

pub async fn maze_edit(State(s): Shared, body: Bytes) -> Result<Json<Envelope<MazeState>>, ApiError> {
    handle(s, "/maze/edit", body, |_, r: EditRequest| Ok(r.maze.edit(r.edit)?)).await
}

// --- policy ----------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRequest {
    pub maze: MazeState,
    #[serde(default)]
    pub spec: SpecDoc,
}

pub async fn policy_field(State(s): Shared, body: Bytes) -> Result<Json<Envelope<VectorField>>, ApiError> {
    handle(s, "/policy/field", body, |st, r: FieldRequest| {
        let spec = resolve(st, &r.spec)?;
        Ok(vector_field(&st.net, &r.maze, &spec)?)
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationsRequest {
    pub maze: MazeState,
    #[serde(default = "default_tap")]
    pub tap: String,
    pub channels: Vec<usize>,
    /// Applied before the capture, so edits show up in the returned slices.
    #[serde(default)]
    pub spec: SpecDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSlice {
    pub channel: usize,
    /// `[y][x]`; row 0 is the top of the maze.
    pub values: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activations {
    pub tap: String,
    pub channels: Vec<ChannelSlice>,
    /// Policy output for the same forward pass.
    pub probs: ActionDistribution,
}

pub async fn policy_activations(State(s): Shared, body: Bytes) -> Result<Json<Envelope<Activations>>, ApiError> {
    handle(s, "/policy/activations", body, |st, r: ActivationsRequest| {
        only_default_tap(&r.tap)?;
        let spec = resolve(st, &r.spec)?;
        let (probs, mut cap) = st.net.forward_with_intervention(&render_observation(&r.maze), &spec, &[&r.tap])?;
        let t = cap.remove(&r.tap).expect("requested tap is captured");
        let (n, w) = (t.dims()[0], t.dims()[2]);
        let channels = r
            .channels
            .iter()
            .map(|&c| {
                if c >= n {
                    return Err(ApiError::Domain(format!("channel {c} out of range 0..{n}")));
                }
                Ok(ChannelSlice { channel: c, values: t.channel(c).chunks(w).map(<[f32]>::to_vec).collect() })
            })
            .collect::<Result<_, _>>()?;
        Ok(Activations { tap: r.tap, channels, probs })
    })
    .await
}

// --- interventions -----------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorRequest {
    pub maze: MazeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub channel: usize,
    pub l2: f64,
}

/// A stored steering vector: its id for `delta_ref` plus summary numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub delta_id: String,
    pub tap: String,
    pub dims: Vec<usize>,
    pub provenance: Provenance,
    pub flagged_zero: bool,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub l2_norm: f64,
    /// Channels with a nonzero entry.
    pub nonzero_channels: usize,
    /// Up to eight channels by decreasing norm.
    pub top_channels: Vec<ChannelNorm>,
}

const TOP_CHANNELS: usize = 8;

fn summarize(st: &AppState, d: ActivationDelta) -> DeltaSummary {
    let t = &d.delta;
    let data = t.data();
    let sum_abs: f64 = data.iter().map(|v| v.abs() as f64).sum();
    let l2 = data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    let mut norms: Vec<ChannelNorm> = (0..t.dims()[0])
        .map(|c| ChannelNorm { channel: c, l2: t.channel(c).iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt() })
        .filter(|n| n.l2 > 0.0)
        .collect();
    let nonzero_channels = norms.len();
    norms.sort_by(|a, b| b.l2.total_cmp(&a.l2).then(a.channel.cmp(&b.channel)));
    norms.truncate(TOP_CHANNELS);
    DeltaSummary {
        delta_id: st.store(d.delta.clone()),
        tap: d.tap,
        dims: t.dims().to_vec(),
        provenance: d.provenance,
        flagged_zero: d.flagged_zero,
        max_abs: t.max_abs() as f64,
        mean_abs: if data.is_empty() { 0.0 } else { sum_abs / data.len() as f64 },
        l2_norm: l2,
        nonzero_channels,
        top_channels: norms,
    }
}

pub async fn cheese_vector(State(s): Shared, body: Bytes) -> Result<Json<Envelope<DeltaSummary>>, ApiError> {
    handle(s, "/interventions/cheese_vector", body, |st, r: VectorRequest| {
        Ok(summarize(st, compute_cheese_vector(&st.net, &r.maze, DEFAULT_TAP)?))
    })
    .await
}

pub async fn topright_vector(State(s): Shared, body: Bytes) -> Result<Json<Envelope<DeltaSummary>>, ApiError> {
    handle(s, "/interventions/topright_vector", body, |st, r: VectorRequest| {
        Ok(summarize(st, compute_top_right_vector(&st.net, &r.maze, DEFAULT_TAP)?))
    })
    .await
}

// --- metrics ---------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathProbRequest {
    pub maze: MazeState,
    pub target: Coord,
    #[serde(default)]
    pub spec: SpecDoc,
}

pub async fn path_prob(State(s): Shared, body: Bytes) -> Result<Json<Envelope<f64>>, ApiError> {
    handle(s, "/metrics/path_prob", body, |st, r: PathProbRequest| {
        let spec = resolve(st, &r.spec)?;
        Ok(normalized_path_probability(&st.net, &r.maze, r.target, &spec)?)
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapRequest {
    pub maze: MazeState,
    pub condition: HeatmapCondition,
    /// Edit strength for the channel conditions; each set's default when absent.
    #[serde(default)]
    pub alpha: Option<f32>,
}

pub async fn heatmap(State(s): Shared, body: Bytes) -> Result<Json<Envelope<Heatmap>>, ApiError> {
    handle(s, "/metrics/heatmap", body, |st, r: HeatmapRequest| {
        Ok(retargetability_heatmap(&st.net, &r.maze, r.condition, r.alpha)?)
    })
    .await
}
