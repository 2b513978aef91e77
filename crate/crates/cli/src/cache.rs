// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk cache of steering vectors, enabled by `GOALSCOPE_CACHE`. Entries
//! are GSW1 files named by the SHA-256 of (weights id, vector kind, tap,
//! maze JSON), so a stale entry can only come from a colliding hash.

use std::path::PathBuf;
use std::sync::Arc;

use goalscope_core::interventions::{
    compute_cheese_vector, compute_top_right_vector, modify_maze_top_right, ActivationDelta, Provenance,
};
use goalscope_core::maze::{MazeError, MazeState};
use goalscope_core::net::{read_gsw1, write_gsw1, PolicyNetwork, Tensor};

use crate::artifacts::sha256_hex;
use crate::error::CliError;

pub const CACHE_ENV: &str = "GOALSCOPE_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    Cheese,
    TopRight,
}

impl VectorKind {
    fn name(self) -> &'static str {
        match self {
            VectorKind::Cheese => "cheese",
            VectorKind::TopRight => "top_right",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DeltaCache {
    dir: Option<PathBuf>,
}

impl DeltaCache {
    pub fn from_env() -> Self {
        Self { dir: std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from) }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    pub fn disabled() -> Self {
        Self { dir: None }
    }

    fn key(weights_id: &str, kind: VectorKind, tap: &str, m: &MazeState) -> Result<String, CliError> {
        let maze = serde_json::to_string(m)?;
        Ok(sha256_hex(format!("{weights_id}\n{}\n{tap}\n{maze}", kind.name()).as_bytes()))
    }

    pub fn vector(
        &self,
        net: &PolicyNetwork,
        weights_id: &str,
        kind: VectorKind,
        tap: &str,
        m: &MazeState,
    ) -> Result<ActivationDelta, CliError> {
        let compute = || -> Result<ActivationDelta, CliError> {
            Ok(match kind {
                VectorKind::Cheese => compute_cheese_vector(net, m, tap)?,
                VectorKind::TopRight => compute_top_right_vector(net, m, tap)?,
            })
        };
        let Some(dir) = &self.dir else { return compute() };
        let file = dir.join(format!("{}.gsw1", Self::key(weights_id, kind, tap, m)?));
        if let Ok(bytes) = std::fs::read(&file) {
            if let Some((_, t)) = read_gsw1(&bytes)?.into_iter().find(|(n, _)| n == "delta") {
                return Ok(rebuild(kind, tap, m, t)?);
            }
        }
        let delta = compute()?;
        std::fs::create_dir_all(dir)?;
        // Write then rename so concurrent runs never read a partial file.
        let tmp = file.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, write_gsw1([("delta", delta.delta.as_ref())]))?;
        std::fs::rename(&tmp, &file)?;
        Ok(delta)
    }
}

fn rebuild(kind: VectorKind, tap: &str, m: &MazeState, t: Tensor) -> Result<ActivationDelta, MazeError> {
    let (provenance, flagged_zero) = match kind {
        VectorKind::Cheese => (Provenance::CheeseVector { seed: m.seed, cheese: m.cheese.ok_or(MazeError::NoCheese)? }, false),
        VectorKind::TopRight => {
            let base = m.with_cheese(None).with_agent(m.start_square());
            (Provenance::TopRightVector { seed: m.seed }, modify_maze_top_right(&base) == base)
        }
    };
    Ok(ActivationDelta { tap: tap.into(), delta: Arc::new(t), provenance, flagged_zero })
}
