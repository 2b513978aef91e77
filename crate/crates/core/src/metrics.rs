// SPDX-License-Identifier: MIT OR Apache-2.0

//! Behavioral measurements: vector fields, path probabilities, retargeting
//! heatmaps and resampling distances.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interventions::{
    capture, grid_to_activation_cell, Atom, ChannelSet, InterventionSpec, ALL_CHEESE, EFFECTIVE, SINGLE,
};
use crate::maze::{generate_maze, Action, CheesePlacement, Coord, MazeError, MazeState, GRID};
use crate::net::{ActionDistribution, NetError, PolicyNetwork, DEFAULT_TAP};
use crate::render::render_observation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error("vector fields cover different squares")]
    SquareSetMismatch,
    #[error("no donor maze found after seed {0}")]
    NoDonor(u64),
}

/// Anything that maps a maze state to an action distribution.
pub trait Policy {
    fn act(&self, m: &MazeState) -> Result<ActionDistribution, MetricsError>;
}

/// A network evaluated under a fixed intervention.
#[derive(Debug, Clone)]
pub struct NetPolicy<'a> {
    pub net: &'a PolicyNetwork,
    pub spec: InterventionSpec,
}

impl<'a> NetPolicy<'a> {
    pub fn plain(net: &'a PolicyNetwork) -> Self {
        Self { net, spec: InterventionSpec::default() }
    }

    pub fn new(net: &'a PolicyNetwork, spec: InterventionSpec) -> Self {
        Self { net, spec }
    }
}

impl Policy for NetPolicy<'_> {
    fn act(&self, m: &MazeState) -> Result<ActionDistribution, MetricsError> {
        let (d, _) = self.net.forward_with_intervention(&render_observation(m), &self.spec, &[])?;
        Ok(d)
    }
}

/// Same distribution everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPolicy(pub ActionDistribution);

impl Policy for ConstantPolicy {
    fn act(&self, _: &MazeState) -> Result<ActionDistribution, MetricsError> {
        Ok(self.0)
    }
}

// --- vector fields -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub square: Coord,
    pub probs: ActionDistribution,
    /// `(p_RIGHT − p_LEFT, p_UP − p_DOWN)`.
    pub net: (f64, f64),
}

/// Policy output with the agent placed on each free square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub seed: u64,
    pub entries: Vec<FieldEntry>,
}

impl VectorField {
    pub fn get(&self, square: Coord) -> Option<&FieldEntry> {
        self.entries.iter().find(|e| e.square == square)
    }
}

fn net_vector(d: &ActionDistribution) -> (f64, f64) {
    let p = |a: Action| d.probs[a.index()];
    (p(Action::Right) - p(Action::Left), p(Action::Up) - p(Action::Down))
}

pub fn vector_field_with(policy: &dyn Policy, m: &MazeState) -> Result<VectorField, MetricsError> {
    let entries = m
        .free_cells()
        .map(|square| {
            let probs = policy.act(&m.with_agent(square))?;
            Ok(FieldEntry { square, probs, net: net_vector(&probs) })
        })
        .collect::<Result<_, MetricsError>>()?;
    Ok(VectorField { seed: m.seed, entries })
}

pub fn vector_field(net: &PolicyNetwork, m: &MazeState, spec: &InterventionSpec) -> Result<VectorField, MetricsError> {
    vector_field_with(&NetPolicy::new(net, spec.clone()), m)
}

// --- distances -----------------------------------------------------------------

/// Total variation, `½·Σ|p − q|`.
pub fn action_distribution_distance(p: &ActionDistribution, q: &ActionDistribution) -> f64 {
    0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Mean per-square total variation.
pub fn field_distance(a: &VectorField, b: &VectorField) -> Result<f64, MetricsError> {
    if a.entries.len() != b.entries.len() || a.entries.iter().zip(&b.entries).any(|(x, y)| x.square != y.square) {
        return Err(MetricsError::SquareSetMismatch);
    }
    if a.entries.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a.entries.iter().zip(&b.entries).map(|(x, y)| action_distribution_distance(&x.probs, &y.probs)).sum();
    Ok(total / a.entries.len() as f64)
}

// --- path probability ----------------------------------------------------------

fn geometric_mean(probs: &[f64]) -> f64 {
    if probs.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    // Exact for constant sequences, where the log round trip would drift.
    if probs.windows(2).all(|w| w[0] == w[1]) {
        return probs[0];
    }
    (probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64).exp().min(1.0)
}

/// Geometric mean of the probability of each correct action along the
/// shortest path from the agent to `target`. When the agent already stands
/// on `target` this is the NOOP probability there.
pub fn normalized_path_probability_with(
    policy: &dyn Policy,
    m: &MazeState,
    target: Coord,
) -> Result<f64, MetricsError> {
    path_probability_cached(m, target, &mut |sq| policy.act(&m.with_agent(sq)))
}

pub fn normalized_path_probability(
    net: &PolicyNetwork,
    m: &MazeState,
    target: Coord,
    spec: &InterventionSpec,
) -> Result<f64, MetricsError> {
    normalized_path_probability_with(&NetPolicy::new(net, spec.clone()), m, target)
}

fn path_probability_cached(
    m: &MazeState,
    target: Coord,
    act_at: &mut dyn FnMut(Coord) -> Result<ActionDistribution, MetricsError>,
) -> Result<f64, MetricsError> {
    if !target.in_grid() || !m.is_free(target) {
        return Err(MazeError::TargetNotFree(target).into());
    }
    if target == m.agent {
        return Ok(act_at(target)?.probs[Action::Noop.index()]);
    }
    let path = m.shortest_path(m.agent, target)?;
    let probs = path
        .squares
        .iter()
        .zip(&path.actions)
        .map(|(&sq, &a)| Ok(act_at(sq)?.probs[a.index()]))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(geometric_mean(&probs))
}

// --- heatmaps ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeatmapCondition {
    Base,
    Channel55,
    Effective,
    AllChannels,
    CheeseMove,
}

impl HeatmapCondition {
    pub const ALL: [HeatmapCondition; 5] = [
        HeatmapCondition::Base,
        HeatmapCondition::Channel55,
        HeatmapCondition::Effective,
        HeatmapCondition::AllChannels,
        HeatmapCondition::CheeseMove,
    ];

    /// Channel set written by the condition, if it edits activations.
    pub fn channel_set(self) -> Option<ChannelSet> {
        match self {
            HeatmapCondition::Channel55 => Some(ChannelSet::Single),
            HeatmapCondition::Effective => Some(ChannelSet::Effective),
            HeatmapCondition::AllChannels => Some(ChannelSet::All),
            HeatmapCondition::Base | HeatmapCondition::CheeseMove => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeatmapCondition::Base => "Base",
            HeatmapCondition::Channel55 => "Channel55",
            HeatmapCondition::Effective => "Effective",
            HeatmapCondition::AllChannels => "AllChannels",
            HeatmapCondition::CheeseMove => "CheeseMove",
        }
    }

    /// The retargeting edit for `target`; `alpha` overrides the set's default.
    pub fn spec_for(self, target: Coord, alpha: Option<f32>) -> InterventionSpec {
        match self.channel_set() {
            Some(set) => InterventionSpec::set_cells(DEFAULT_TAP, set.channels(), target, alpha.unwrap_or(set.default_alpha())),
            None => InterventionSpec::default(),
        }
    }
}

impl std::str::FromStr for HeatmapCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        HeatmapCondition::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

/// Path probabilities per target square, indexed `[row][col]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub seed: u64,
    pub condition: HeatmapCondition,
    pub values: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn cells(&self) -> impl Iterator<Item = (Coord, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(row, r)| r.iter().enumerate().filter_map(move |(col, v)| v.map(|v| (Coord::new(col, row), v))))
    }

    pub fn get(&self, c: Coord) -> Option<f64> {
        self.values.get(c.row)?.get(c.col).copied().flatten()
    }

    pub fn mean(&self) -> f64 {
        let (sum, n) = self.cells().fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Key under which a target's policy is cached: targets sharing it share
/// every forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PolicyKey {
    Plain,
    Cell(usize, usize),
    Cheese(Coord),
}

/// `P_path` for every free target with the cheese removed first.
pub fn retargetability_heatmap(
    net: &PolicyNetwork,
    m: &MazeState,
    condition: HeatmapCondition,
    alpha: Option<f32>,
) -> Result<Heatmap, MetricsError> {
    let base = m.with_cheese(None);
    let mut cache: BTreeMap<(PolicyKey, Coord), ActionDistribution> = BTreeMap::new();
    let mut values = vec![vec![None; GRID]; GRID];
    for target in base.free_cells().collect::<Vec<_>>() {
        let (key, maze, spec) = match condition {
            HeatmapCondition::Base => (PolicyKey::Plain, base.clone(), InterventionSpec::default()),
            HeatmapCondition::CheeseMove => (PolicyKey::Cheese(target), base.with_cheese(Some(target)), InterventionSpec::default()),
            c => {
                let (y, x) = grid_to_activation_cell(target);
                (PolicyKey::Cell(y, x), base.clone(), c.spec_for(target, alpha))
            }
        };
        let p = path_probability_cached(&maze, target, &mut |sq| {
            if let Some(d) = cache.get(&(key, sq)) {
                return Ok(*d);
            }
            let (d, _) = net.forward_with_intervention(&render_observation(&maze.with_agent(sq)), &spec, &[])?;
            cache.insert((key, sq), d);
            Ok(d)
        })?;
        values[target.row][target.col] = Some(p);
    }
    Ok(Heatmap { seed: m.seed, condition, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub distance: usize,
    pub mean_ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub condition: HeatmapCondition,
    pub points: Vec<RatioPoint>,
    /// Cells skipped because their base probability was zero.
    pub excluded: usize,
}

/// Mean of `P_condition / P_base` bucketed by distance from the path to the
/// top-right square.
pub fn retarget_ratio_curve(
    net: &PolicyNetwork,
    mazes: &[MazeState],
    condition: HeatmapCondition,
    alpha: Option<f32>,
) -> Result<RatioCurve, MetricsError> {
    let mut pairs = Vec::with_capacity(mazes.len());
    for m in mazes {
        let base = retargetability_heatmap(net, m, HeatmapCondition::Base, None)?;
        let cond = if condition == HeatmapCondition::Base {
            base.clone()
        } else {
            retargetability_heatmap(net, m, condition, alpha)?
        };
        pairs.push((m.clone(), base, cond));
    }
    Ok(ratio_curve_from_heatmaps(condition, &pairs))
}

/// The bucketing half of [`retarget_ratio_curve`], for callers that already
/// hold `(maze, base heatmap, condition heatmap)` triples.
pub fn ratio_curve_from_heatmaps(condition: HeatmapCondition, pairs: &[(MazeState, Heatmap, Heatmap)]) -> RatioCurve {
    let mut buckets: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut excluded = 0;
    for (m, base, cond) in pairs {
        let dist = m.with_cheese(None).distance_from_top_right_path();
        for (c, pb) in base.cells() {
            let Some(d) = dist[c.row][c.col] else { continue };
            if pb == 0.0 {
                excluded += 1;
                continue;
            }
            let pc = cond.get(c).unwrap_or(0.0);
            let entry = buckets.entry(d).or_insert((0.0, 0));
            entry.0 += pc / pb;
            entry.1 += 1;
        }
    }
    let points = buckets
        .into_iter()
        .map(|(distance, (sum, count))| RatioPoint { distance, mean_ratio: sum / count as f64, count })
        .collect();
    RatioCurve { condition, points, excluded }
}

// --- resampling ----------------------------------------------------------------

/// Target maze for a seed: generated at `inner_size` with uniform cheese.
pub fn scrub_target(seed: u64, inner_size: usize) -> Result<MazeState, MazeError> {
    generate_maze(seed, inner_size)?.place_cheese(CheesePlacement::Uniform { seed })
}

/// Donors for `target`: the first later seed whose maze has the target's
/// cheese cell free, once with cheese there and once with cheese elsewhere.
pub fn scrub_donors(target: &MazeState) -> Result<(MazeState, MazeState), MetricsError> {
    let cheese = target.cheese.ok_or(MazeError::NoCheese)?;
    for offset in 1..=1024u64 {
        let seed = target.seed.wrapping_add(offset);
        let donor = generate_maze(seed, target.inner_size())?;
        if !donor.is_free(cheese) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let elsewhere = donor
            .free_cells()
            .filter(|&c| c != cheese && c != donor.agent)
            .choose(&mut rng)
            .ok_or(MetricsError::NoDonor(target.seed))?;
        return Ok((donor.with_cheese(Some(cheese)), donor.with_cheese(Some(elsewhere))));
    }
    Err(MetricsError::NoDonor(target.seed))
}

/// A channel set the same size as `tested`, disjoint from it, drawn with `seed`.
pub fn control_channels(tested: &BTreeSet<usize>, n_channels: usize, seed: u64) -> BTreeSet<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_channels)
        .filter(|c| !tested.contains(c))
        .choose_multiple(&mut rng, tested.len())
        .into_iter()
        .collect()
}

fn resample_spec(net: &PolicyNetwork, donor: &MazeState, channels: &BTreeSet<usize>) -> Result<InterventionSpec, NetError> {
    if channels.is_empty() {
        return Ok(InterventionSpec::default());
    }
    let donor = capture(net, &donor.with_agent(donor.start_square()), DEFAULT_TAP)?;
    Ok(InterventionSpec::new(vec![Atom::ResampleChannels {
        tap: DEFAULT_TAP.into(),
        channels: channels.clone(),
        donor: Arc::new(donor),
    }]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrubRow {
    pub seed: u64,
    pub same_cheese: f64,
    pub random_cheese: f64,
    pub control_same_cheese: f64,
    pub control_random_cheese: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrubReport {
    pub channels: BTreeSet<usize>,
    pub control_channels: BTreeSet<usize>,
    pub rows: Vec<ScrubRow>,
    pub mean_same_cheese: f64,
    pub mean_random_cheese: f64,
    pub mean_control_same_cheese: f64,
    pub mean_control_random_cheese: f64,
    /// Share of seeds where the random-cheese distance beats the same-cheese one.
    pub random_exceeds_same: f64,
    /// Larger control mean over the smaller; 1 when both are zero.
    pub control_ratio: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Field distances after copying `channels` from same-cheese and
/// random-cheese donors, plus the same for a size-matched control set.
pub fn resampling_experiment(
    net: &PolicyNetwork,
    seeds: &[u64],
    inner_size: usize,
    channels: &BTreeSet<usize>,
    control_seed: u64,
) -> Result<ScrubReport, MetricsError> {
    let n_channels = net.tap_shape(DEFAULT_TAP)?[0];
    let control = control_channels(channels, n_channels, control_seed);
    let rows = seeds
        .iter()
        .map(|&seed| scrub_row(net, seed, inner_size, channels, &control))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScrubReport::from_rows(channels.clone(), control, rows))
}

/// One seed of [`resampling_experiment`].
pub fn scrub_row(
    net: &PolicyNetwork,
    seed: u64,
    inner_size: usize,
    channels: &BTreeSet<usize>,
    control: &BTreeSet<usize>,
) -> Result<ScrubRow, MetricsError> {
    let target = scrub_target(seed, inner_size)?;
    let (same, random) = scrub_donors(&target)?;
    let base = vector_field(net, &target, &InterventionSpec::default())?;
    let dist = |set: &BTreeSet<usize>, donor: &MazeState| -> Result<f64, MetricsError> {
        if set.is_empty() {
            return Ok(0.0);
        }
        let f = vector_field(net, &target, &resample_spec(net, donor, set)?)?;
        field_distance(&base, &f)
    };
    Ok(ScrubRow {
        seed,
        same_cheese: dist(channels, &same)?,
        random_cheese: dist(channels, &random)?,
        control_same_cheese: dist(control, &same)?,
        control_random_cheese: dist(control, &random)?,
    })
}

impl ScrubReport {
    /// Aggregate per-seed rows, kept in the given order.
    pub fn from_rows(channels: BTreeSet<usize>, control_channels: BTreeSet<usize>, rows: Vec<ScrubRow>) -> Self {
        let m = |f: fn(&ScrubRow) -> f64| mean(rows.iter().map(f));
        let (cs, cr) = (m(|r| r.control_same_cheese), m(|r| r.control_random_cheese));
        let control_ratio = if cs == 0.0 && cr == 0.0 {
            1.0
        } else if cs == 0.0 || cr == 0.0 {
            f64::INFINITY
        } else {
            cs.max(cr) / cs.min(cr)
        };
        ScrubReport {
            channels,
            control_channels,
            mean_same_cheese: m(|r| r.same_cheese),
            mean_random_cheese: m(|r| r.random_cheese),
            mean_control_same_cheese: cs,
            mean_control_random_cheese: cr,
            random_exceeds_same: mean(rows.iter().map(|r| if r.random_cheese > r.same_cheese { 1.0 } else { 0.0 })),
            control_ratio,
            rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipRates {
    pub same_location: f64,
    pub different_location: f64,
    /// Seeds that had a decision square.
    pub evaluated: usize,
}

/// Share of decision squares whose argmax action changes after resampling
/// `channels` from each donor. Seeds without a decision square are skipped.
pub fn decision_flip_rate(
    net: &PolicyNetwork,
    seeds: &[u64],
    inner_size: usize,
    channels: &BTreeSet<usize>,
) -> Result<FlipRates, MetricsError> {
    let outcomes = seeds
        .iter()
        .map(|&seed| decision_flip(net, seed, inner_size, channels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FlipRates::from_outcomes(&outcomes))
}

/// Whether resampling from the (same, random) cheese donor flips the argmax
/// at the decision square; `None` when there is no decision square.
pub fn decision_flip(
    net: &PolicyNetwork,
    seed: u64,
    inner_size: usize,
    channels: &BTreeSet<usize>,
) -> Result<Option<(bool, bool)>, MetricsError> {
    let target = scrub_target(seed, inner_size)?;
    let Some(decision) = target.decision_square(target.cheese.ok_or(MazeError::NoCheese)?)? else {
        return Ok(None);
    };
    let at = target.with_agent(decision);
    let (same, random) = scrub_donors(&target)?;
    let plain = NetPolicy::plain(net).act(&at)?.argmax();
    let flipped = |donor: &MazeState| -> Result<bool, MetricsError> {
        let d = NetPolicy::new(net, resample_spec(net, donor, channels)?).act(&at)?;
        Ok(d.argmax() != plain)
    };
    Ok(Some((flipped(&same)?, flipped(&random)?)))
}

impl FlipRates {
    pub fn from_outcomes(outcomes: &[Option<(bool, bool)>]) -> Self {
        let done: Vec<(bool, bool)> = outcomes.iter().flatten().copied().collect();
        let rate = |k: usize| if done.is_empty() { 0.0 } else { k as f64 / done.len() as f64 };
        FlipRates {
            same_location: rate(done.iter().filter(|o| o.0).count()),
            different_location: rate(done.iter().filter(|o| o.1).count()),
            evaluated: done.len(),
        }
    }
}

/// Named channel set by CLI spelling.
pub fn channels_by_name(name: &str) -> Option<BTreeSet<usize>> {
    let set: &[usize] = match name {
        "single" => &SINGLE,
        "effective" => &EFFECTIVE,
        "all" => &ALL_CHEESE,
        "none" => &[],
        _ => return None,
    };
    Some(set.iter().copied().collect())
}
