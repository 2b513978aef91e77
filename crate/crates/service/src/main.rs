// SPDX-License-Identifier: MIT OR Apache-2.0

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use axum::http::HeaderValue;
use clap::Parser;
use goalscope_core::net::synthetic::{build_synthetic_policy, SyntheticConfig};
use goalscope_core::net::{load_weights, sidecar_path, ArchitectureDescriptor, PolicyNetwork};
use goalscope_service::{router, AppState};
use sha2::{Digest, Sha256};

/// Serve forward passes, interventions and metrics over HTTP.
#[derive(Debug, Parser)]
#[command(name = "goalscope-service", version)]
struct Args {
    /// `synthetic`, `uniform`, or a GSW1 weight file.
    #[arg(long, default_value = "synthetic")]
    weights: String,
    /// Softmax sharpness of the synthetic network.
    #[arg(long, default_value_t = 4.0)]
    sharpness: f32,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Allowed cross-origin caller; any origin when absent.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn load(args: &Args) -> Result<(PolicyNetwork, String), String> {
    match args.weights.as_str() {
        "synthetic" => {
            if !(args.sharpness.is_finite() && args.sharpness > 0.0) {
                return Err("--sharpness must be positive".into());
            }
            let cfg = SyntheticConfig { sharpness: args.sharpness, ..Default::default() };
            let id = format!("synthetic:{}", serde_json::to_string(&cfg).map_err(|e| e.to_string())?);
            Ok((build_synthetic_policy(&cfg).map_err(|e| e.to_string())?, id))
        }
        "uniform" => Ok((PolicyNetwork::zeros(ArchitectureDescriptor::reference()).map_err(|e| e.to_string())?, "uniform".into())),
        path => {
            let path = PathBuf::from(path);
            let net = load_weights(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut h = Sha256::new();
            h.update(std::fs::read(&path).map_err(|e| e.to_string())?);
            if let Ok(side) = std::fs::read(sidecar_path(&path)) {
                h.update(side);
            }
            Ok((net, format!("sha256:{}", hex::encode(h.finalize()))))
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let (net, id) = match load(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let origin = match args.cors_origin.as_deref().map(HeaderValue::from_str).transpose() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: --cors-origin: {e}");
            return ExitCode::from(2);
        }
    };
    let app = router(Arc::new(AppState::new(net, id.clone())), origin);
    let listener = match tokio::net::TcpListener::bind(args.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: bind {}: {e}", args.listen);
            return ExitCode::FAILURE;
        }
    };
    eprintln!("goalscope-service: weights {id}, listening on {}", args.listen);
    if let Err(e) = axum::serve(listener, app).await {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
