// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use goalscope_core::maze::GRID;
use goalscope_core::net::synthetic::{build_synthetic_policy, horizon_for, SyntheticConfig};
use goalscope_core::net::{load_weights, sidecar_path, ArchitectureDescriptor, PolicyNetwork};
use sha2::{Digest, Sha256};

use crate::args::{Common, WeightsSource};
use crate::error::CliError;

/// A network plus a stable identity string for cache keys and run records.
pub struct LoadedWeights {
    pub net: PolicyNetwork,
    pub id: String,
}

/// Propagation horizon for `inner_size` mazes, with room for the corridor
/// the top-right construction carves through the padding.
pub fn synthetic_horizon(inner_size: usize) -> usize {
    (horizon_for(inner_size) + 2 * (GRID - inner_size)).min(horizon_for(GRID))
}

pub fn load(common: &Common) -> Result<LoadedWeights, CliError> {
    match &common.weights {
        WeightsSource::Synthetic => {
            let cfg = SyntheticConfig {
                sharpness: common.sharpness,
                horizon: synthetic_horizon(common.size),
                ..Default::default()
            };
            let id = format!("synthetic:{}", serde_json::to_string(&cfg)?);
            Ok(LoadedWeights { net: build_synthetic_policy(&cfg)?, id })
        }
        WeightsSource::Uniform => Ok(LoadedWeights {
            net: PolicyNetwork::zeros(ArchitectureDescriptor::reference())?,
            id: "uniform".into(),
        }),
        WeightsSource::File(path) => Ok(LoadedWeights { net: load_weights(path)?, id: file_id(path)? }),
        WeightsSource::Threshold => {
            Err(CliError::Config("`--weights threshold` is only accepted by `study`".into()))
        }
    }
}

/// SHA-256 over the weight file and its descriptor sidecar, if any.
fn file_id(path: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(std::fs::read(path)?);
    if let Ok(sidecar) = std::fs::read(sidecar_path(path)) {
        h.update(sidecar);
    }
    Ok(format!("sha256:{}", hex::encode(h.finalize())))
}
