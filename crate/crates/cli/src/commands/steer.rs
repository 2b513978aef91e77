// SPDX-License-Identifier: MIT OR Apache-2.0

use goalscope_core::interventions::InterventionSpec;
use goalscope_core::maze::{generate_maze, CheesePlacement, Coord, MazeState};
use goalscope_core::metrics::{action_distribution_distance, vector_field, MetricsError, VectorField};
use goalscope_core::net::{PolicyNetwork, DEFAULT_TAP, N_ACTIONS};
use serde::{Deserialize, Serialize};

use super::decision_probs::landmark_actions;
use super::progress;
use crate::args::{finite, SteerArgs, SteerVector};
use crate::artifacts::RunDir;
use crate::cache::{DeltaCache, VectorKind};
use crate::error::CliError;
use crate::weights;

pub const SUMMARY_FILE: &str = "summary.json";

pub fn field_name(seed: u64, part: &str) -> String {
    format!("steer_seed{seed}_{part}.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub square: Coord,
    /// Modified minus original, per action.
    pub probs: [f64; N_ACTIONS],
    pub net: (f64, f64),
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub seed: u64,
    pub threshold: f64,
    /// Squares whose total-variation change exceeds `threshold`.
    pub changed: usize,
    pub mean_tv: f64,
    pub entries: Vec<DiffEntry>,
}

pub fn field_diff(original: &VectorField, modified: &VectorField, threshold: f64) -> Result<FieldDiff, MetricsError> {
    if original.entries.len() != modified.entries.len()
        || original.entries.iter().zip(&modified.entries).any(|(a, b)| a.square != b.square)
    {
        return Err(MetricsError::SquareSetMismatch);
    }
    let entries: Vec<DiffEntry> = original
        .entries
        .iter()
        .zip(&modified.entries)
        .map(|(a, b)| DiffEntry {
            square: a.square,
            probs: std::array::from_fn(|i| b.probs.probs[i] - a.probs.probs[i]),
            net: (b.net.0 - a.net.0, b.net.1 - a.net.1),
            tv: action_distribution_distance(&a.probs, &b.probs),
        })
        .collect();
    let mean_tv = if entries.is_empty() { 0.0 } else { entries.iter().map(|e| e.tv).sum::<f64>() / entries.len() as f64 };
    Ok(FieldDiff {
        seed: original.seed,
        threshold,
        changed: entries.iter().filter(|e| e.tv > threshold).count(),
        mean_tv,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerRow {
    pub seed: u64,
    pub mean_tv: f64,
    pub changed: usize,
    pub decision_square: Option<Coord>,
    /// Probability of the cheeseward action at the decision square, before and after.
    pub cheese_action_original: Option<f64>,
    pub cheese_action_modified: Option<f64>,
    /// The top-right construction opened no cells, so its vector is zero.
    pub top_right_flagged_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerSummary {
    pub vector: SteerVector,
    pub rows: Vec<SteerRow>,
}

/// The steering spec for one maze; the flag reports a degenerate top-right vector.
pub fn steering_spec(
    net: &PolicyNetwork,
    weights_id: &str,
    cache: &DeltaCache,
    m: &MazeState,
    vector: SteerVector,
    alpha: f32,
    alpha_tr: f32,
) -> Result<(InterventionSpec, bool), CliError> {
    let cheese = || -> Result<InterventionSpec, CliError> {
        let d = cache.vector(net, weights_id, VectorKind::Cheese, DEFAULT_TAP, m)?;
        Ok(InterventionSpec::add(&d, alpha))
    };
    let top_right = || -> Result<(InterventionSpec, bool), CliError> {
        let d = cache.vector(net, weights_id, VectorKind::TopRight, DEFAULT_TAP, m)?;
        Ok((InterventionSpec::add(&d, alpha_tr), d.flagged_zero))
    };
    Ok(match vector {
        SteerVector::Cheese => (cheese()?, false),
        SteerVector::TopRight => top_right()?,
        SteerVector::Compose => {
            let (tr, flagged) = top_right()?;
            (InterventionSpec::compose(&cheese()?, &tr), flagged)
        }
    })
}

pub fn run(a: &SteerArgs) -> Result<(), CliError> {
    a.common.validate()?;
    finite("--alpha", a.alpha)?;
    finite("--alpha-tr", a.alpha_tr)?;
    if !(a.threshold.is_finite() && a.threshold >= 0.0) {
        return Err(CliError::Config("--threshold must be non-negative".into()));
    }
    let w = weights::load(&a.common)?;
    let cache = DeltaCache::from_env();
    let results = a.common.map_seeds(|seed| {
        progress("steer", format!("seed {seed}"));
        let m = generate_maze(seed, a.common.size)?.place_cheese(CheesePlacement::Uniform { seed })?;
        let (spec, flagged) = steering_spec(&w.net, &w.id, &cache, &m, a.vector, a.alpha, a.alpha_tr)?;
        let original = vector_field(&w.net, &m, &InterventionSpec::default())?;
        let modified = vector_field(&w.net, &m, &spec)?;
        let diff = field_diff(&original, &modified, a.threshold)?;
        let landmarks = landmark_actions(&m)?;
        let at = |f: &VectorField| {
            landmarks.and_then(|l| f.get(l.decision).map(|e| e.probs.probs[l.cheese_action.index()]))
        };
        let row = SteerRow {
            seed,
            mean_tv: diff.mean_tv,
            changed: diff.changed,
            decision_square: landmarks.map(|l| l.decision),
            cheese_action_original: at(&original),
            cheese_action_modified: at(&modified),
            top_right_flagged_zero: flagged,
        };
        Ok((original, modified, diff, row))
    })?;
    let mut out = RunDir::create(&a.common.out)?;
    let mut rows = Vec::new();
    for (original, modified, diff, row) in results {
        out.write_json(&field_name(row.seed, "original"), &original)?;
        out.write_json(&field_name(row.seed, "modified"), &modified)?;
        out.write_json(&field_name(row.seed, "diff"), &diff)?;
        rows.push(row);
    }
    out.write_json(SUMMARY_FILE, &SteerSummary { vector: a.vector, rows })?;
    out.finish("steer", a, &w.id)?;
    Ok(())
}
