// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rollouts, the landmark-feature dataset, sparse logistic regression and
//! the collinearity diagnostics that go with it.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maze::{generate_maze, Action, CheesePlacement, Coord, FeatureRow, MazeError, MazeState, FEATURE_NAMES};
use crate::metrics::{MetricsError, Policy};
use crate::net::ActionDistribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("feature `{0}` has a non-finite value")]
    NonFiniteFeature(String),
    #[error("model features {model:?} do not match data features {data:?}")]
    FeatureNameMismatch { model: Vec<String>, data: Vec<String> },
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("ragged design matrix")]
    Ragged,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("empty seed range")]
    EmptyRange,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Maze(#[from] MazeError),
}

// --- rollouts ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// Visited squares, starting with the agent's.
    pub path: Vec<Coord>,
    pub actions: Vec<Action>,
    pub reached_cheese: bool,
}

impl Rollout {
    pub fn end(&self) -> Coord {
        *self.path.last().expect("a rollout path holds the start square")
    }
}

/// Greedy rollout. Ends on the cheese, after `max_steps` actions, or when
/// the agent would revisit a square (a wall bump or NOOP counts as one).
/// A cheeseless maze runs until one of the other two.
pub fn rollout(policy: &dyn Policy, m: &MazeState, max_steps: usize) -> Result<Rollout, MetricsError> {
    let cheese = m.cheese;
    let mut pos = m.agent;
    let mut out = Rollout { path: vec![pos], actions: Vec::new(), reached_cheese: Some(pos) == cheese };
    let mut seen = BTreeSet::from([pos]);
    while !out.reached_cheese && out.actions.len() < max_steps {
        let action = Action::ALL[policy.act(&m.with_agent(pos))?.argmax()];
        let next = pos.step(action).filter(|&c| m.is_free(c)).unwrap_or(pos);
        out.actions.push(action);
        if !seen.insert(next) {
            break;
        }
        out.path.push(next);
        pos = next;
        out.reached_cheese = Some(pos) == cheese;
    }
    Ok(out)
}

// --- scripted threshold policy -------------------------------------------------

/// Linear go-to-cheese rule over landmark distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    /// Weight on the path distance from cheese to the decision square.
    pub w_dpath: f64,
    /// Weight on the Euclidean distance from cheese to the decision square.
    pub w_d2: f64,
    /// Weight on the Euclidean distance from cheese to the top-right 5×5.
    pub w_corner: f64,
    pub bias: f64,
}

impl ThresholdRule {
    /// Planted features with non-zero weight, by canonical name.
    pub fn planted(&self) -> Vec<(&'static str, f64)> {
        [("dpath_cheese_decision", self.w_dpath), ("d2_cheese_decision", self.w_d2), ("d2_cheese_tr5x5", self.w_corner)]
            .into_iter()
            .filter(|(_, w)| *w != 0.0)
            .collect()
    }

    pub fn score(&self, f: &FeatureRow) -> f64 {
        self.planted().iter().map(|(name, w)| w * f.get(name).unwrap_or(0.0)).sum::<f64>() + self.bias
    }
}

/// Walks the shortest path to the cheese when the rule scores positive and
/// to the reachable top-right otherwise. The rule is evaluated with the agent
/// on its start square, so the choice does not change mid-episode. Mazes
/// without a decision square always go to the cheese.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub rule: ThresholdRule,
}

pub fn make_threshold_policy(rule: ThresholdRule) -> ThresholdPolicy {
    ThresholdPolicy { rule }
}

impl ThresholdPolicy {
    pub fn goes_to_cheese(&self, m: &MazeState) -> Result<bool, MazeError> {
        let cheese = m.cheese.ok_or(MazeError::NoCheese)?;
        let start = m.with_agent(m.start_square());
        match start.decision_square(cheese)? {
            None => Ok(true),
            Some(_) => Ok(self.rule.score(&start.extract_features(cheese)?) > 0.0),
        }
    }

    pub fn target(&self, m: &MazeState) -> Result<Coord, MazeError> {
        if self.goes_to_cheese(m)? {
            m.cheese.ok_or(MazeError::NoCheese)
        } else {
            Ok(m.with_agent(m.start_square()).reachable_top_right())
        }
    }
}

impl Policy for ThresholdPolicy {
    fn act(&self, m: &MazeState) -> Result<ActionDistribution, MetricsError> {
        let target = self.target(m)?;
        let action = if m.agent == target {
            Action::Noop
        } else {
            m.shortest_path(m.agent, target)?.actions[0]
        };
        let mut probs = [0.0; 5];
        probs[action.index()] = 1.0;
        Ok(ActionDistribution { probs })
    }
}

// --- dataset -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    Uniform,
    TopRight,
}

impl PlacementKind {
    fn for_seed(self, seed: u64) -> CheesePlacement {
        match self {
            PlacementKind::Uniform => CheesePlacement::Uniform { seed },
            PlacementKind::TopRight => CheesePlacement::TopRight { seed },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seeds: Range<u64>,
    pub inner_size: usize,
    pub max_steps: usize,
    pub placement: PlacementKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub total: usize,
    pub cheese_in_top_right: usize,
    pub no_decision_square: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub policy: String,
    pub config: DatasetConfig,
    pub filters: FilterCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDataset {
    pub rows: Vec<FeatureRow>,
    pub provenance: DatasetProvenance,
}

/// One labeled row per seed. Seeds are dropped when the cheese lands in the
/// top-right 5×5 or the maze has no decision square.
pub fn build_dataset(policy: &dyn Policy, policy_id: &str, config: &DatasetConfig) -> Result<StudyDataset, BehaviorError> {
    if config.seeds.is_empty() {
        return Err(BehaviorError::EmptyRange);
    }
    let mut filters = FilterCounts::default();
    let mut rows = Vec::new();
    for seed in config.seeds.clone() {
        filters.total += 1;
        let m = generate_maze(seed, config.inner_size)?.place_cheese(config.placement.for_seed(seed))?;
        let cheese = m.cheese.ok_or(MazeError::NoCheese)?;
        if m.in_top_right_block(cheese) {
            filters.cheese_in_top_right += 1;
            continue;
        }
        let mut row = match m.extract_features(cheese) {
            Ok(row) => row,
            Err(MazeError::NoDecisionSquare) => {
                filters.no_decision_square += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        row.reached_cheese = Some(rollout(policy, &m, config.max_steps)?.reached_cheese);
        rows.push(row);
    }
    filters.kept = rows.len();
    Ok(StudyDataset {
        rows,
        provenance: DatasetProvenance { policy: policy_id.to_string(), config: config.clone(), filters },
    })
}

/// Feature matrix with named columns and boolean labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl Design {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self, BehaviorError> {
        if rows.len() != labels.len() || rows.iter().any(|r| r.len() != names.len()) {
            return Err(BehaviorError::Ragged);
        }
        Ok(Self { names, rows, labels })
    }

    /// Columns `features` of a dataset; rows without a label are skipped.
    pub fn from_dataset(ds: &StudyDataset, features: &[&str]) -> Result<Self, BehaviorError> {
        let idx = features
            .iter()
            .map(|f| FEATURE_NAMES.iter().position(|n| n == f).ok_or_else(|| BehaviorError::UnknownFeature(f.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let labeled: Vec<_> = ds.rows.iter().filter_map(|r| r.reached_cheese.map(|y| (r, y))).collect();
        Ok(Self {
            names: features.iter().map(|s| s.to_string()).collect(),
            rows: labeled.iter().map(|(r, _)| idx.iter().map(|&i| r.values[i]).collect()).collect(),
            labels: labeled.iter().map(|(_, y)| *y).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

// --- l1 logistic regression ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    /// Raw-scale coefficients.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Coefficients on standardized features; the penalty applies to these.
    pub std_coefficients: Vec<f64>,
    pub std_intercept: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub lambda: f64,
    pub cycles: usize,
    pub objective: f64,
    /// Largest subgradient-optimality residual at the solution.
    pub optimality_gap: f64,
    /// Objective after every cycle, starting from the initial point.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl LogisticModel {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|j| self.coefficients[j])
    }

    /// Linear predictor on raw features.
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision_value(x))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Problem<'a> {
    z: Vec<Vec<f64>>, // column-major standardized features
    y: &'a [f64],
    lambda: f64,
}

impl Problem<'_> {
    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn loss(&self, eta: &[f64]) -> f64 {
        eta.iter().zip(self.y).map(|(&e, &y)| softplus(e) - y * e).sum::<f64>() / self.n()
    }

    fn objective(&self, eta: &[f64], beta: &[f64]) -> f64 {
        self.loss(eta) + self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Gradient and curvature of the loss along column `col` (`None` is the intercept).
    fn grad_curv(&self, eta: &[f64], col: Option<&[f64]>) -> (f64, f64) {
        let (mut g, mut h) = (0.0, 0.0);
        for (i, (&e, &y)) in eta.iter().zip(self.y).enumerate() {
            let p = sigmoid(e);
            let z = col.map_or(1.0, |c| c[i]);
            g += (p - y) * z;
            h += p * (1.0 - p) * z * z;
        }
        (g / self.n(), h / self.n())
    }

    /// Change in the loss when `eta` moves by `step·col`, summed row by row
    /// so that tiny improvements are not lost to rounding in the full sum.
    /// Uses `softplus(a + d) − softplus(a) = ln(1 + σ(a)·(eᵈ − 1))`.
    fn loss_change(&self, eta: &[f64], col: Option<&[f64]>, step: f64) -> f64 {
        let total: f64 = eta
            .iter()
            .zip(self.y)
            .enumerate()
            .map(|(i, (&e, &y))| {
                let d = step * col.map_or(1.0, |c| c[i]);
                let lift = if d < 30.0 { (sigmoid(e) * d.exp_m1()).ln_1p() } else { softplus(e + d) - softplus(e) };
                lift - y * d
            })
            .sum();
        total / self.n()
    }

    /// One coordinate update; returns the size of the move and the change
    /// in the objective. The majorizing step (curvature bound ¼·mean z²)
    /// never increases the objective; a Newton-prox step replaces it when
    /// it does better.
    fn update(&self, eta: &mut [f64], beta: &mut [f64], b0: &mut f64, j: Option<usize>) -> (f64, f64) {
        let col = j.map(|j| self.z[j].as_slice());
        let (g, h) = self.grad_curv(eta, col);
        let bound = 0.25 * col.map_or(1.0, |c| c.iter().map(|v| v * v).sum::<f64>() / self.n());
        let (cur, pen) = match j {
            Some(j) => (beta[j], self.lambda),
            None => (*b0, 0.0),
        };
        let prox = |curv: f64| soft_threshold(cur - g / curv, pen / curv);
        let gain = |b: f64| self.loss_change(eta, col, b - cur) + pen * (b.abs() - cur.abs());
        let mm = prox(bound);
        let (mut best, mut best_gain) = (mm, gain(mm));
        if h > bound * 1e-12 {
            let newton = prox(h);
            if newton != mm {
                let g2 = gain(newton);
                if g2 < best_gain {
                    (best, best_gain) = (newton, g2);
                }
            }
        }
        if best == cur || best_gain > 0.0 {
            return (0.0, 0.0);
        }
        let step = best - cur;
        for (i, e) in eta.iter_mut().enumerate() {
            *e += step * col.map_or(1.0, |c| c[i]);
        }
        match j {
            Some(j) => beta[j] = best,
            None => *b0 = best,
        }
        (step.abs(), best_gain)
    }

    fn optimality_gap(&self, eta: &[f64], beta: &[f64], pinned: &[bool]) -> f64 {
        let mut gap = self.grad_curv(eta, None).0.abs();
        for (j, b) in beta.iter().enumerate() {
            if pinned[j] {
                continue;
            }
            let (g, _) = self.grad_curv(eta, Some(&self.z[j]));
            let r = if *b == 0.0 { (g.abs() - self.lambda).max(0.0) } else { (g + self.lambda * b.signum()).abs() };
            gap = gap.max(r);
        }
        gap
    }
}

/// Column means, column standard deviations, standardized rows.
type Standardized = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

/// Mean and population standard deviation per column.
fn standardize(x: &Design) -> Result<Standardized, BehaviorError> {
    let n = x.len() as f64;
    let p = x.names.len();
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    let mut cols = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(BehaviorError::NonFiniteFeature(x.names[j].clone()));
        }
        let m = col.iter().sum::<f64>() / n;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        means[j] = m;
        stds[j] = s;
        cols.push(col.iter().map(|v| if s > 0.0 { (v - m) / s } else { 0.0 }).collect());
    }
    Ok((means, stds, cols))
}

/// Minimize mean logistic loss plus `lambda·Σ|β|` over standardized
/// features by cyclic coordinate descent, until a full cycle moves no
/// coordinate by more than `tol` and every coordinate is optimal within `tol`.
///
/// Constant columns get a zero coefficient. When two standardized columns
/// are identical the later one is pinned to zero, so exact duplicates never
/// share weight.
pub fn fit_logistic_l1(x: &Design, lambda: f64, tol: f64) -> Result<LogisticModel, BehaviorError> {
    if x.len() < 2 {
        return Err(BehaviorError::TooFewRows { needed: 2, got: x.len() });
    }
    let positives = x.labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == x.len() {
        return Err(BehaviorError::SingleClass);
    }
    let (means, stds, z) = standardize(x)?;
    let y: Vec<f64> = x.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let p = z.len();
    let pinned: Vec<bool> = (0..p).map(|j| stds[j] == 0.0 || (0..j).any(|k| stds[k] > 0.0 && z[k] == z[j])).collect();
    let prob = Problem { z, y: &y, lambda };

    let rate = positives as f64 / x.len() as f64;
    let mut b0 = (rate / (1.0 - rate)).ln();
    let mut beta = vec![0.0; p];
    let mut eta = vec![b0; x.len()];
    let mut trace = vec![prob.objective(&eta, &beta)];
    let mut cycles = 0;
    const MAX_CYCLES: usize = 100_000;
    loop {
        cycles += 1;
        let (mut moved, mut change) = prob.update(&mut eta, &mut beta, &mut b0, None);
        for j in (0..p).filter(|&j| !pinned[j]) {
            let (m, c) = prob.update(&mut eta, &mut beta, &mut b0, Some(j));
            moved = moved.max(m);
            change += c;
        }
        // Accumulated from accurate per-step changes; a fresh full sum would
        // carry more rounding noise than the late steps are worth.
        let last = *trace.last().expect("trace starts non-empty");
        trace.push(last + change);
        if (moved <= tol && prob.optimality_gap(&eta, &beta, &pinned) <= tol) || cycles >= MAX_CYCLES {
            break;
        }
    }
    let coefficients: Vec<f64> = (0..p).map(|j| if pinned[j] { 0.0 } else { beta[j] / stds[j] }).collect();
    let intercept = b0 - (0..p).map(|j| coefficients[j] * means[j]).sum::<f64>();
    Ok(LogisticModel {
        feature_names: x.names.clone(),
        coefficients,
        intercept,
        optimality_gap: prob.optimality_gap(&eta, &beta, &pinned),
        objective: prob.objective(&eta, &beta),
        std_coefficients: beta,
        std_intercept: b0,
        means,
        stds,
        lambda,
        cycles,
        objective_trace: trace,
    })
}

/// Smallest `lambda` at which every coefficient is zero.
pub fn lambda_max(x: &Design) -> Result<f64, BehaviorError> {
    let (_, _, z) = standardize(x)?;
    let n = x.len() as f64;
    let rate = x.labels.iter().filter(|&&y| y).count() as f64 / n;
    Ok(z.iter()
        .map(|col| (col.iter().zip(&x.labels).map(|(v, &y)| v * (rate - if y { 1.0 } else { 0.0 })).sum::<f64>() / n).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Accuracy of always predicting the majority class.
    pub baseline: f64,
    pub n: usize,
}

/// Share of rows where `p > 0.5` agrees with the label.
pub fn evaluate(model: &LogisticModel, x: &Design) -> Result<Evaluation, BehaviorError> {
    if model.feature_names != x.names {
        return Err(BehaviorError::FeatureNameMismatch { model: model.feature_names.clone(), data: x.names.clone() });
    }
    let n = x.len();
    let correct = x.rows.iter().zip(&x.labels).filter(|(r, &y)| (model.predict_proba(r) > 0.5) == y).count();
    let pos = x.labels.iter().filter(|&&y| y).count();
    let ratio = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(Evaluation { accuracy: ratio(correct), baseline: ratio(pos.max(n - pos)), n })
}

// --- resplit stability ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub n_splits: usize,
    pub val_frac: f64,
    pub lambda: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { n_splits: 10, val_frac: 0.2, lambda: 0.01, tol: 1e-7, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStability {
    pub name: String,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
    /// Times the coefficient took the minority sign.
    pub sign_flips: usize,
    pub mean_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub features: Vec<FeatureStability>,
    pub mean_accuracy: f64,
    pub mean_baseline: f64,
    pub splits: usize,
    /// Splits skipped because the training part held a single class.
    pub skipped: usize,
}

/// Refit on `n_splits` random train/validation splits and count sign changes.
pub fn stability_study(x: &Design, cfg: &StabilityConfig) -> Result<StabilityReport, BehaviorError> {
    let n = x.len();
    let n_val = ((n as f64) * cfg.val_frac).round() as usize;
    if n < 2 + n_val {
        return Err(BehaviorError::TooFewRows { needed: 2 + n_val, got: n });
    }
    let p = x.names.len();
    let mut coefs: Vec<Vec<f64>> = vec![Vec::new(); p];
    let (mut acc, mut base, mut skipped) = (Vec::new(), Vec::new(), 0);
    for split in 0..cfg.n_splits {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(split as u64)));
        let (val, train) = order.split_at(n_val);
        let model = match fit_logistic_l1(&x.subset(train), cfg.lambda, cfg.tol) {
            Ok(m) => m,
            Err(BehaviorError::SingleClass) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let eval = evaluate(&model, &x.subset(if val.is_empty() { train } else { val }))?;
        acc.push(eval.accuracy);
        base.push(eval.baseline);
        for (j, c) in model.coefficients.iter().enumerate() {
            coefs[j].push(*c);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let features = x
        .names
        .iter()
        .zip(&coefs)
        .map(|(name, cs)| {
            let positive = cs.iter().filter(|&&c| c > 0.0).count();
            let negative = cs.iter().filter(|&&c| c < 0.0).count();
            FeatureStability {
                name: name.clone(),
                positive,
                negative,
                zero: cs.len() - positive - negative,
                sign_flips: positive.min(negative),
                mean_coefficient: mean(cs),
            }
        })
        .collect();
    Ok(StabilityReport { features, mean_accuracy: mean(&acc), mean_baseline: mean(&base), splits: acc.len(), skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetFit {
    pub features: Vec<String>,
    pub coefficients: BTreeMap<String, f64>,
    pub accuracy: f64,
}

/// Fit on `n_subsets` random feature subsets of `size` columns each.
pub fn subset_study(x: &Design, n_subsets: usize, size: usize, lambda: f64, seed: u64) -> Result<Vec<SubsetFit>, BehaviorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..x.names.len()).collect();
    (0..n_subsets)
        .map(|_| {
            let mut cols: Vec<usize> = all.choose_multiple(&mut rng, size.min(all.len())).copied().collect();
            cols.sort_unstable();
            let sub = Design {
                names: cols.iter().map(|&j| x.names[j].clone()).collect(),
                rows: x.rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect(),
                labels: x.labels.clone(),
            };
            let model = fit_logistic_l1(&sub, lambda, 1e-7)?;
            Ok(SubsetFit {
                accuracy: evaluate(&model, &sub)?.accuracy,
                coefficients: sub.names.iter().cloned().zip(model.coefficients.iter().copied()).collect(),
                features: sub.names,
            })
        })
        .collect()
}

// --- collinearity --------------------------------------------------------------

/// Below this unexplained-variance share a column counts as exactly collinear.
const COLLINEAR: f64 = 1e-10;

/// Variance inflation factor of every column: `1 / (1 − R²)` from a
/// least-squares fit of the column on all others plus an intercept.
/// Exactly collinear columns give `+∞`.
pub fn vif(x: &Design) -> Result<Vec<f64>, BehaviorError> {
    let (n, p) = (x.len(), x.names.len());
    if n < p + 1 {
        return Err(BehaviorError::TooFewRows { needed: p + 1, got: n });
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    for (j, c) in cols.iter().enumerate() {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(BehaviorError::NonFiniteFeature(x.names[j].clone()));
        }
        if c.iter().all(|&v| v == c[0]) {
            return Err(BehaviorError::ConstantColumn(x.names[j].clone()));
        }
    }
    (0..p)
        .map(|j| {
            let target = DVector::from_column_slice(&cols[j]);
            // Column j's slot holds the intercept.
            let a = DMatrix::from_fn(n, p, |i, k| if k == j { 1.0 } else { cols[k][i] });
            let fit = a.clone().svd(true, true).solve(&target, 1e-12).map_err(|_| BehaviorError::ZeroVariance)?;
            let resid = &target - &a * fit;
            let mean = target.mean();
            let sst: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
            let unexplained = resid.norm_squared() / sst;
            Ok(if unexplained <= COLLINEAR { f64::INFINITY } else { 1.0 / unexplained })
        })
        .collect()
}

/// Sample correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, BehaviorError> {
    if x.len() != y.len() {
        return Err(BehaviorError::Ragged);
    }
    if x.len() < 2 {
        return Err(BehaviorError::TooFewRows { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(BehaviorError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
