// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{header, HeaderMap, HeaderValue, Method, Request, StatusCode};
use axum::Router;
use goalscope_core::interventions::{grid_to_activation_cell, ALL_CHEESE};
use goalscope_core::maze::Coord;
use goalscope_core::net::synthetic::{build_synthetic_policy, SyntheticConfig};
use goalscope_core::net::{ArchitectureDescriptor, PolicyNetwork};
use goalscope_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn synthetic_net() -> PolicyNetwork {
    static NET: OnceLock<PolicyNetwork> = OnceLock::new();
    NET.get_or_init(|| build_synthetic_policy(&SyntheticConfig::default()).unwrap()).clone()
}

fn synthetic() -> Router {
    router(Arc::new(AppState::new(synthetic_net(), "synthetic")), None)
}

fn uniform() -> Router {
    let net = PolicyNetwork::zeros(ArchitectureDescriptor::reference()).unwrap();
    router(Arc::new(AppState::new(net, "uniform")), None)
}

struct Reply {
    status: StatusCode,
    headers: HeaderMap,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }

    fn result(&self) -> Value {
        assert_eq!(self.status, StatusCode::OK, "{}", String::from_utf8_lossy(&self.bytes));
        self.json()["result"].clone()
    }
}

async fn send(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, bytes }
}

async fn post_raw(app: &Router, path: &str, body: impl Into<Body>) -> Reply {
    let req = Request::post(path).header(header::CONTENT_TYPE, "application/json").body(body.into()).unwrap();
    send(app, req).await
}

async fn post(app: &Router, path: &str, body: Value) -> Reply {
    post_raw(app, path, body.to_string()).await
}

async fn maze(app: &Router, seed: u64, size: usize) -> Value {
    post(app, "/maze/generate", json!({"seed": seed, "size": size})).await.result()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    jsonschema::validator_for(&doc).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn assert_valid(name: &str, v: &Value) {
    let errors: Vec<String> = schema(name).iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn assert_envelope(r: &Reply, result_schema: &str) {
    let v = r.json();
    assert_valid("envelope.schema.json", &v);
    assert_valid(result_schema, &v["result"]);
}

fn assert_error(r: &Reply, status: StatusCode, kind: &str) -> Value {
    assert_eq!(r.status, status, "{}", String::from_utf8_lossy(&r.bytes));
    let v = r.json();
    assert_valid("error.schema.json", &v);
    assert_eq!(v["error"], kind);
    v
}

/// An inner wall cell whose opening would close a loop: its two neighbors
/// on one axis are both free.
fn cycle_making_wall(m: &Value) -> [usize; 2] {
    let rows: Vec<Vec<u8>> = m["grid"].as_array().unwrap().iter().map(|r| r.as_str().unwrap().bytes().collect()).collect();
    // grid[k] is row 24 - k.
    let free = |c: usize, r: usize| rows[24 - r][c] == b'.';
    let size = m["inner_size"].as_u64().unwrap() as usize;
    let off = (25 - size) / 2;
    for r in off..off + size {
        for c in off..off + size {
            if free(c, r) {
                continue;
            }
            let horiz = c > off && c + 1 < off + size && free(c - 1, r) && free(c + 1, r);
            let vert = r > off && r + 1 < off + size && free(c, r - 1) && free(c, r + 1);
            if horiz || vert {
                return [c, r];
            }
        }
    }
    panic!("no loop-closing wall");
}

#[tokio::test]
async fn generate_validates_and_is_deterministic() {
    let app = synthetic();
    let a = post(&app, "/maze/generate", json!({"seed": 4, "size": 11})).await;
    let b = post(&app, "/maze/generate", json!({"seed": 4, "size": 11})).await;
    assert_eq!(a.bytes, b.bytes);
    assert_envelope(&a, "maze_state.schema.json");
    let m = a.result();
    assert_eq!(m["inner_size"], 11);
    assert!(m["cheese"].is_array());
    let none = post(&app, "/maze/generate", json!({"seed": 4, "size": 11, "cheese": "none"})).await.result();
    assert!(none["cheese"].is_null());
    assert_eq!(none["grid"], m["grid"]);
}

#[tokio::test]
async fn field_with_empty_spec_twice_gives_identical_bodies() {
    let app = synthetic();
    let m = maze(&app, 1, 9).await;
    let a = post(&app, "/policy/field", json!({"maze": m})).await;
    let b = post(&app, "/policy/field", json!({"maze": m, "spec": {"atoms": []}})).await;
    let c = post(&app, "/policy/field", json!({"maze": m})).await;
    assert_eq!(a.bytes, c.bytes);
    // Same field whether the empty spec is spelled out or not; the hash
    // still tells the two requests apart.
    assert_eq!(a.json()["result"], b.json()["result"]);
    assert_ne!(a.json()["request_hash"], b.json()["request_hash"]);
    assert_envelope(&a, "vector_field.schema.json");
}

#[tokio::test]
async fn request_hash_ignores_key_order_and_whitespace() {
    let app = synthetic();
    let a = post_raw(&app, "/maze/generate", r#"{"seed":3,"size":7}"#).await;
    let b = post_raw(&app, "/maze/generate", "{ \"size\" : 7,\n \"seed\" : 3 }").await;
    assert_eq!(a.json()["request_hash"], b.json()["request_hash"]);
    assert_eq!(a.bytes, b.bytes);
    // Same body, different route.
    let m = maze(&app, 3, 7).await;
    let f = post(&app, "/policy/field", json!({"maze": m})).await.json();
    let p = post(&app, "/metrics/path_prob", json!({"maze": m, "target": m["agent"]})).await.json();
    assert_ne!(f["request_hash"], p["request_hash"]);
}

#[tokio::test]
async fn replay_against_fresh_server_matches() {
    let m = maze(&synthetic(), 6, 9).await;
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let app = synthetic();
        let v = post(&app, "/interventions/cheese_vector", json!({"maze": m})).await;
        let id = v.result()["delta_id"].clone();
        let spec = json!({"atoms": [{"kind": "add", "delta_ref": id, "coeff": -1.0}]});
        let f = post(&app, "/policy/field", json!({"maze": m, "spec": spec})).await;
        bodies.push((v.bytes, f.result()));
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let app = synthetic();
    let m = maze(&app, 2, 7).await;
    let body = json!({"maze": m});
    let (a, b, c) = tokio::join!(
        post(&app, "/interventions/topright_vector", body.clone()),
        post(&app, "/interventions/topright_vector", body.clone()),
        post(&app, "/interventions/topright_vector", body.clone()),
    );
    assert_eq!(a.bytes, b.bytes);
    assert_eq!(a.bytes, c.bytes);
    assert_envelope(&a, "delta_summary.schema.json");
}

#[tokio::test]
async fn edit_breaking_tree_names_invariant() {
    let app = synthetic();
    let m = maze(&app, 5, 13).await;
    let at = cycle_making_wall(&m);
    let r = post(&app, "/maze/edit", json!({"maze": m, "edit": {"kind": "toggle_wall", "at": at}})).await;
    let v = assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "invariant_violation");
    assert_eq!(v["invariant"], "acyclic");
    assert!(v["message"].as_str().unwrap().contains("acyclic"));

    let r = post(&app, "/maze/edit", json!({"maze": m, "edit": {"kind": "toggle_wall", "at": [0, 0]}})).await;
    assert_eq!(assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "invariant_violation")["invariant"], "padding");

    // Walling off the agent's square disconnects it from the rest.
    let r = post(&app, "/maze/edit", json!({"maze": m, "edit": {"kind": "toggle_wall", "at": m["agent"]}})).await;
    let inv = assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "invariant_violation")["invariant"].clone();
    assert!(inv == "connected" || inv == "agent_on_free", "{inv}");
}

#[tokio::test]
async fn legal_edits_round_trip() {
    let app = synthetic();
    let m = maze(&app, 5, 9).await;
    let cleared = post(&app, "/maze/edit", json!({"maze": m, "edit": {"kind": "clear_cheese"}})).await;
    assert_envelope(&cleared, "maze_state.schema.json");
    let cleared = cleared.result();
    assert!(cleared["cheese"].is_null());
    let back = post(&app, "/maze/edit", json!({"maze": cleared, "edit": {"kind": "place_cheese", "at": m["cheese"]}})).await.result();
    assert_eq!(back, m);
    let moved = post(&app, "/maze/edit", json!({"maze": m, "edit": {"kind": "move_agent", "at": m["cheese"]}})).await.result();
    assert_eq!(moved["agent"], m["cheese"]);
}

#[tokio::test]
async fn path_prob_on_uniform_net_is_a_fifth() {
    let app = uniform();
    let m = maze(&app, 8, 13).await;
    for target in [m["cheese"].clone(), m["agent"].clone()] {
        let r = post(&app, "/metrics/path_prob", json!({"maze": m, "target": target})).await;
        assert_envelope(&r, "path_prob.schema.json");
        let p = r.result().as_f64().unwrap();
        assert!((p - 0.2).abs() < 1e-12, "{p}");
    }
}

#[tokio::test]
async fn uniform_heatmap_is_flat() {
    let app = uniform();
    let m = maze(&app, 1, 5).await;
    let r = post(&app, "/metrics/heatmap", json!({"maze": m, "condition": "Channel55"})).await;
    assert_envelope(&r, "heatmap.schema.json");
    let h = r.result();
    let cells: Vec<f64> = h["values"].as_array().unwrap().iter().flat_map(|row| row.as_array().unwrap().clone()).filter_map(|v| v.as_f64()).collect();
    assert!(!cells.is_empty());
    assert!(cells.iter().all(|p| (p - 0.2).abs() < 1e-12));
}

/// Per-channel L2 norms of the difference between two activation captures.
async fn diff_norms(app: &Router, with: &Value, without: &Value) -> Vec<f64> {
    let all: Vec<usize> = (0..128).collect();
    let cap = |m: &Value| post(app, "/policy/activations", json!({"maze": m, "channels": all}));
    let (a, b) = (cap(with).await.result(), cap(without).await.result());
    (0..128)
        .map(|c| {
            let rows = |v: &Value| -> Vec<f64> {
                v["channels"][c]["values"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect::<Vec<_>>()).collect()
            };
            rows(&a).iter().zip(rows(&b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .collect()
}

#[tokio::test]
async fn cheese_vector_summary_matches_two_captures() {
    let app = synthetic();
    let m = maze(&app, 3, 11).await;
    let r = post(&app, "/interventions/cheese_vector", json!({"maze": m})).await;
    assert_envelope(&r, "delta_summary.schema.json");
    let s = r.result();
    assert_eq!(s["provenance"]["kind"], "cheese_vector");
    assert_eq!(s["provenance"]["cheese"], m["cheese"]);
    assert_eq!(s["dims"], json!([128, 16, 16]));

    let mut without = m.clone();
    without["cheese"] = Value::Null;
    let norms = diff_norms(&app, &m, &without).await;
    let total = norms.iter().map(|n| n * n).sum::<f64>().sqrt();
    assert!((s["l2_norm"].as_f64().unwrap() - total).abs() < 1e-6 * total.max(1.0));
    assert_eq!(s["nonzero_channels"].as_u64().unwrap() as usize, norms.iter().filter(|&&n| n > 0.0).count());
    for c in s["top_channels"].as_array().unwrap() {
        let ch = c["channel"].as_u64().unwrap() as usize;
        assert!((c["l2"].as_f64().unwrap() - norms[ch]).abs() < 1e-6);
    }
    // The synthetic goal channels all respond to the cheese.
    assert!(ALL_CHEESE.iter().all(|&c| norms[c] > 0.0));
}

#[tokio::test]
async fn stored_delta_steers_the_field() {
    let app = synthetic();
    let m = maze(&app, 3, 11).await;
    let id = post(&app, "/interventions/cheese_vector", json!({"maze": m})).await.result()["delta_id"].clone();
    let plain = post(&app, "/policy/field", json!({"maze": m})).await.result();
    let zero = json!({"atoms": [{"kind": "add", "delta_ref": id, "coeff": 0.0}]});
    assert_eq!(post(&app, "/policy/field", json!({"maze": m, "spec": zero})).await.result(), plain);
    let steer = json!({"atoms": [{"kind": "add", "delta_ref": id, "coeff": -1.0}]});
    let steered = post(&app, "/policy/field", json!({"maze": m, "spec": steer})).await;
    assert_envelope(&steered, "vector_field.schema.json");
    assert_ne!(steered.result(), plain);
}

#[tokio::test]
async fn activations_reflect_set_atoms() {
    let app = synthetic();
    let m = maze(&app, 2, 9).await;
    let spec = json!({"atoms": [{"kind": "set", "channel": 55, "cell": [3, 12], "value": 5.5}]});
    let r = post(&app, "/policy/activations", json!({"maze": m, "channels": [55, 0], "spec": spec})).await;
    assert_envelope(&r, "activations.schema.json");
    let a = r.result();
    assert_eq!(a["channels"][0]["channel"], 55);
    assert_eq!(a["channels"][0]["values"][3][12], 5.5);
    assert_eq!(a["channels"][1]["channel"], 0);
    let plain = post(&app, "/policy/activations", json!({"maze": m, "channels": [55]})).await.result();
    assert_ne!(plain["channels"][0]["values"][3][12], 5.5);
}

#[tokio::test]
async fn unknown_delta_is_404() {
    let app = synthetic();
    let m = maze(&app, 0, 7).await;
    let spec = json!({"atoms": [{"kind": "add", "delta_ref": format!("sha256:{}", "0".repeat(64))}]});
    let field = post(&app, "/policy/field", json!({"maze": m, "spec": spec})).await;
    assert_error(&field, StatusCode::NOT_FOUND, "unknown_delta");
    let prob = post(&app, "/metrics/path_prob", json!({"maze": m, "target": m["agent"], "spec": spec})).await;
    assert_error(&prob, StatusCode::NOT_FOUND, "unknown_delta");
}

#[tokio::test]
async fn malformed_requests_are_400() {
    let app = synthetic();
    let m = maze(&app, 0, 7).await;
    let mut bad_grid = m.clone();
    bad_grid["grid"][0] = json!("#x#######################");
    let mut short = m.clone();
    short["grid"].as_array_mut().unwrap().pop();
    let cases = [
        ("/maze/generate", Body::from("{not json")),
        ("/maze/generate", Body::from(r#"{"seed": 1}"#)),
        ("/maze/generate", Body::from(r#"{"seed": -1, "size": 7}"#)),
        ("/maze/generate", Body::from(r#"{"seed": 1, "size": 7, "extra": true}"#)),
        ("/policy/field", Body::from(json!({"maze": bad_grid}).to_string())),
        ("/policy/field", Body::from(json!({"maze": short}).to_string())),
        ("/maze/edit", Body::from(json!({"maze": m, "edit": {"kind": "melt"}}).to_string())),
        ("/metrics/heatmap", Body::from(json!({"maze": m, "condition": "Nope"}).to_string())),
        ("/policy/field", Body::from(json!({"maze": m, "spec": {"atoms": [{"kind": "set", "channel": 55}]}}).to_string())),
    ];
    for (path, body) in cases {
        let r = post_raw(&app, path, body).await;
        assert_error(&r, StatusCode::BAD_REQUEST, "malformed");
    }
}

#[tokio::test]
async fn domain_errors_are_422() {
    let app = synthetic();
    let m = maze(&app, 0, 7).await;
    let mut no_cheese = m.clone();
    no_cheese["cheese"] = Value::Null;
    let cases = [
        ("/maze/generate", json!({"seed": 1, "size": 8})),
        ("/maze/edit", json!({"maze": m, "edit": {"kind": "place_cheese", "at": [0, 0]}})),
        ("/maze/edit", json!({"maze": m, "edit": {"kind": "move_agent", "at": [30, 0]}})),
        ("/interventions/cheese_vector", json!({"maze": no_cheese})),
        ("/metrics/path_prob", json!({"maze": m, "target": [0, 0]})),
        ("/policy/activations", json!({"maze": m, "tap": "block1.out", "channels": [0]})),
        ("/policy/activations", json!({"maze": m, "channels": [128]})),
        ("/policy/field", json!({"maze": m, "spec": {"atoms": [{"kind": "set", "channel": 500, "cell": [0, 0], "value": 1.0}]}})),
        ("/policy/field", json!({"maze": m, "spec": {"atoms": [{"kind": "set", "tap": "elsewhere", "channel": 1, "cell": [0, 0], "value": 1.0}]}})),
    ];
    for (path, body) in cases {
        let r = post(&app, path, body).await;
        assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "domain");
    }
}

#[tokio::test]
async fn cors_preflight_and_simple_requests() {
    let app = synthetic();
    let pre = Request::builder()
        .method(Method::OPTIONS)
        .uri("/policy/field")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
        .body(Body::empty())
        .unwrap();
    let r = send(&app, pre).await;
    assert!(r.status.is_success());
    assert_eq!(r.headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
    assert!(r.headers[header::ACCESS_CONTROL_ALLOW_METHODS].to_str().unwrap().contains("POST"));

    let ui = "http://ui.example:3000";
    let pinned = router(Arc::new(AppState::new(synthetic_net(), "synthetic")), Some(HeaderValue::from_static(ui)));
    let req = |origin: &str| {
        Request::post("/maze/generate")
            .header(header::ORIGIN, origin)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(r#"{"seed":0,"size":5}"#))
            .unwrap()
    };
    let ok = send(&pinned, req(ui)).await;
    assert_eq!(ok.headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], ui);
    // The pinned origin is announced whoever asks; browsers reject the mismatch.
    let other = send(&pinned, req("http://evil.example")).await;
    assert_eq!(other.headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], ui);
}

#[tokio::test]
async fn openapi_covers_every_route_and_refs_resolve() {
    let app = synthetic();
    let r = send(&app, Request::get("/openapi.json").body(Body::empty()).unwrap()).await;
    assert_eq!(r.status, StatusCode::OK);
    let doc = r.json();
    let paths = doc["paths"].as_object().unwrap();
    for p in [
        "/maze/generate",
        "/maze/edit",
        "/policy/field",
        "/policy/activations",
        "/interventions/cheese_vector",
        "/interventions/topright_vector",
        "/metrics/path_prob",
        "/metrics/heatmap",
    ] {
        assert!(paths.contains_key(p), "{p}");
    }
    fn refs(v: &Value, out: &mut Vec<String>) {
        match v {
            Value::Object(o) => {
                if let Some(Value::String(r)) = o.get("$ref") {
                    out.push(r.clone());
                }
                o.values().for_each(|v| refs(v, out));
            }
            Value::Array(a) => a.iter().for_each(|v| refs(v, out)),
            _ => {}
        }
    }
    let mut found = Vec::new();
    refs(&doc, &mut found);
    assert!(!found.is_empty());
    for f in found {
        schema(&f);
    }
    let h = send(&app, Request::get("/health").body(Body::empty()).unwrap()).await.json();
    assert_eq!(h["weights"], "synthetic");
}

#[tokio::test]
async fn channel_edit_pulls_policy_toward_clicked_square() {
    let app = synthetic();
    let m = post(&app, "/maze/generate", json!({"seed": 12, "size": 13, "cheese": "none"})).await.result();
    // The inner top-right corner is always free.
    let target = Coord::new(18, 18);
    let (y, x) = grid_to_activation_cell(target);
    let body = |value: f64| {
        let spec = json!({"atoms": [{"kind": "set", "channel": 55, "cell": [y, x], "value": value}]});
        json!({"maze": m, "target": [target.col, target.row], "spec": spec})
    };
    let before = post(&app, "/metrics/path_prob", json!({"maze": m, "target": [18, 18]})).await.result().as_f64().unwrap();
    let after = post(&app, "/metrics/path_prob", body(5.5)).await.result().as_f64().unwrap();
    assert!(after > before, "{before} -> {after}");
    assert!(after > 0.5, "{after}");

    let spec = json!({"atoms": [{"kind": "set", "channel": 55, "cell": [y, x], "value": 5.5}]});
    let plain = post(&app, "/policy/field", json!({"maze": m})).await.result();
    let edited = post(&app, "/policy/field", json!({"maze": m, "spec": spec})).await.result();
    assert_ne!(plain, edited);
}
