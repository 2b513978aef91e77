// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line grammar. Every experiment command shares [`Common`]; the
//! serialized form of an args struct is the run's recorded config, so fields
//! that must not influence outputs (`--out`, `--jobs`) are skipped.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use goalscope_core::behavior::ThresholdRule;
use goalscope_core::maze::{check_size, CheesePlacement};
use goalscope_core::metrics::HeatmapCondition;
use serde::{Serialize, Serializer};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "goalscope", version, about = "Probe, steer and measure maze-solving policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out a policy per seed, then fit and resplit the behavioral regression.
    Study(StudyArgs),
    /// Retargetability heatmaps per condition.
    Heatmap(HeatmapArgs),
    /// Vector fields before and after adding steering vectors.
    Steer(SteerArgs),
    /// Resample goal channels from donor mazes and compare fields.
    Scrub(ScrubArgs),
    /// Decision-square action probabilities under each steering condition.
    DecisionProbs(DecisionProbsArgs),
    /// Print one maze as JSON.
    Maze(MazeArgs),
    /// Write one observation as a 64x64 PNG.
    Render(RenderArgs),
}

/// Where the policy comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightsSource {
    /// A GSW1 weight file, with an optional `<stem>.arch.json` sidecar.
    File(PathBuf),
    /// The constructed goal network.
    Synthetic,
    /// All-zero reference network: every action at 0.2.
    Uniform,
    /// Scripted threshold policy; `study` only.
    Threshold,
}

impl FromStr for WeightsSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "synthetic" => WeightsSource::Synthetic,
            "uniform" => WeightsSource::Uniform,
            "threshold" => WeightsSource::Threshold,
            "" => return Err("empty weights source".into()),
            path => WeightsSource::File(PathBuf::from(path)),
        })
    }
}

impl fmt::Display for WeightsSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightsSource::File(p) => write!(f, "{}", p.display()),
            WeightsSource::Synthetic => f.write_str("synthetic"),
            WeightsSource::Uniform => f.write_str("uniform"),
            WeightsSource::Threshold => f.write_str("threshold"),
        }
    }
}

impl Serialize for WeightsSource {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Half-open seed range written `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn seeds(self) -> Vec<u64> {
        (self.start..self.end).collect()
    }

    pub fn len(self) -> usize {
        self.end.saturating_sub(self.start) as usize
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
        Ok(SeedRange { start: parse(a)?, end: parse(b)? })
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl Serialize for SeedRange {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// GSW1 weight file, `synthetic`, or `uniform`.
    #[arg(long, default_value = "synthetic")]
    pub weights: WeightsSource,
    /// Seed range `A..B` (half-open).
    #[arg(long, default_value = "0..10")]
    pub seeds: SeedRange,
    /// Odd inner maze size, 3 to 25.
    #[arg(long, default_value_t = 13)]
    pub size: usize,
    /// Softmax sharpness of the synthetic network.
    #[arg(long, default_value_t = 4.0)]
    pub sharpness: f32,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub jobs: usize,
}

impl Common {
    pub fn validate(&self) -> Result<(), CliError> {
        check_size(self.size).map_err(|e| CliError::Config(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(CliError::Config(format!("seed range {} is empty", self.seeds)));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return Err(CliError::Config(format!("--sharpness must be positive, got {}", self.sharpness)));
        }
        if let WeightsSource::File(p) = &self.weights {
            if !p.is_file() {
                return Err(CliError::Config(format!("weight file {} not found", p.display())));
            }
        }
        Ok(())
    }

    /// Run `f` on each seed on `jobs` threads, results in seed order.
    pub fn map_seeds<T: Send>(
        &self,
        f: impl Fn(u64) -> Result<T, CliError> + Sync + Send,
    ) -> Result<Vec<T>, CliError> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let seeds = self.seeds.seeds();
        pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
    }
}

pub fn finite(name: &str, v: f32) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be finite")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Uniform,
    TopRight,
}

fn parse_rule(s: &str) -> Result<ThresholdRule, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad rule weight `{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [w_dpath, w_d2, w_corner, bias] if v.iter().all(|x| x.is_finite()) => {
            Ok(ThresholdRule { w_dpath, w_d2, w_corner, bias })
        }
        _ => Err("expected four finite numbers w_dpath,w_d2,w_corner,bias".into()),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StudyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Rule `w_dpath,w_d2,w_corner,bias` of the threshold policy.
    #[arg(long, value_parser = parse_rule, default_value = "-0.12,-0.25,-0.2,6.0", allow_hyphen_values = true)]
    pub rule: ThresholdRule,
    /// L1 strength on standardized features.
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// Solver tolerance on the largest coordinate update.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Train/validation resplits.
    #[arg(long, default_value_t = 10)]
    pub splits: usize,
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// `all`, `planted` (threshold policy only) or a comma list of feature names.
    #[arg(long, default_value = "all")]
    pub features: String,
    /// Rollout step cap; defaults to twice the inner area.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, value_enum, default_value = "uniform")]
    pub placement: Placement,
    /// Extra fits on this many random feature subsets.
    #[arg(long, default_value_t = 0)]
    pub subsets: usize,
    #[arg(long, default_value_t = 3)]
    pub subset_size: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HeatmapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Comma list of Base, Channel55, Effective, AllChannels, CheeseMove.
    #[arg(long, value_delimiter = ',', default_value = "Base,Channel55,Effective,AllChannels,CheeseMove")]
    pub conditions: Vec<HeatmapCondition>,
    /// Overrides the edit value of the channel conditions.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteerVector {
    Cheese,
    TopRight,
    Compose,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SteerArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "cheese")]
    pub vector: SteerVector,
    /// Coefficient of the cheese vector.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub alpha: f32,
    /// Coefficient of the top-right vector.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha_tr: f32,
    /// Total-variation level above which a square counts as changed.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScrubArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// `single`, `effective`, `all`, `none` or a comma list of channel indices.
    #[arg(long, default_value = "all")]
    pub channels: String,
    /// Seed of the random control channel draw.
    #[arg(long, default_value_t = 0)]
    pub control_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecisionProbsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub alpha: f32,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha_tr: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheeseArg {
    None,
    Uniform,
    TopRight,
}

impl CheeseArg {
    pub fn placement(self, seed: u64) -> Option<CheesePlacement> {
        match self {
            CheeseArg::None => None,
            CheeseArg::Uniform => Some(CheesePlacement::Uniform { seed }),
            CheeseArg::TopRight => Some(CheesePlacement::TopRight { seed }),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MazeArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 25)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub cheese: CheeseArg,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub maze: MazeArgs,
    /// PNG file to write.
    #[arg(long)]
    pub out: PathBuf,
}
