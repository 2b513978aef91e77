// SPDX-License-Identifier: MIT OR Apache-2.0

use goalscope_core::maze::{generate_maze, MazeState};
use goalscope_core::metrics::{ratio_curve_from_heatmaps, retargetability_heatmap, Heatmap, HeatmapCondition, RatioCurve};
use serde::{Deserialize, Serialize};

use super::{num, progress};
use crate::args::{finite, HeatmapArgs};
use crate::artifacts::{heatmap_rgb, RunDir};
use crate::error::CliError;
use crate::weights;

pub const SUMMARY_FILE: &str = "summary.json";

pub fn csv_name(c: HeatmapCondition) -> String {
    format!("heatmap_{}.csv", c.name())
}

pub fn png_name(c: HeatmapCondition, seed: u64) -> String {
    format!("heatmap_{}_seed{seed}.png", c.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMean {
    pub seed: u64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: HeatmapCondition,
    /// Mean over seeds of the per-maze mean.
    pub mean: f64,
    pub per_seed: Vec<SeedMean>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSummary {
    pub conditions: Vec<ConditionSummary>,
    /// Ratio to Base by distance from the top-right path; empty without Base.
    pub ratio_curves: Vec<RatioCurve>,
}

pub fn run(a: &HeatmapArgs) -> Result<(), CliError> {
    a.common.validate()?;
    if let Some(alpha) = a.alpha {
        finite("--alpha", alpha)?;
    }
    if a.conditions.is_empty() {
        return Err(CliError::Config("no heatmap conditions given".into()));
    }
    let mut conditions = a.conditions.clone();
    conditions.sort();
    conditions.dedup();
    let w = weights::load(&a.common)?;
    let per_seed: Vec<(MazeState, Vec<Heatmap>)> = a.common.map_seeds(|seed| {
        progress("heatmap", format!("seed {seed}"));
        let m = generate_maze(seed, a.common.size)?;
        let maps = conditions
            .iter()
            .map(|&c| retargetability_heatmap(&w.net, &m, c, a.alpha))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((m, maps))
    })?;

    let mut out = RunDir::create(&a.common.out)?;
    let mut summaries = Vec::new();
    for (k, &cond) in conditions.iter().enumerate() {
        let mut rows = Vec::new();
        let mut means = Vec::new();
        for (m, maps) in &per_seed {
            let h = &maps[k];
            for (c, v) in h.cells() {
                rows.push(vec![m.seed.to_string(), c.col.to_string(), c.row.to_string(), cond.name().to_string(), num(v)]);
            }
            let (wd, ht, rgb) = heatmap_rgb(h);
            out.write_png(&png_name(cond, m.seed), wd, ht, &rgb)?;
            means.push(SeedMean { seed: m.seed, mean: h.mean() });
        }
        out.write_csv(&csv_name(cond), &["seed", "col", "row", "condition", "value"], rows)?;
        let mean = means.iter().map(|s| s.mean).sum::<f64>() / means.len() as f64;
        summaries.push(ConditionSummary { condition: cond, mean, per_seed: means });
    }

    let mut ratio_curves = Vec::new();
    if let Some(b) = conditions.iter().position(|&c| c == HeatmapCondition::Base) {
        for (k, &cond) in conditions.iter().enumerate() {
            let triples: Vec<(MazeState, Heatmap, Heatmap)> =
                per_seed.iter().map(|(m, maps)| (m.clone(), maps[b].clone(), maps[k].clone())).collect();
            ratio_curves.push(ratio_curve_from_heatmaps(cond, &triples));
        }
    }
    out.write_json(SUMMARY_FILE, &HeatmapSummary { conditions: summaries, ratio_curves })?;
    out.finish("heatmap", a, &w.id)?;
    Ok(())
}
