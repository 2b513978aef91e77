// SPDX-License-Identifier: MIT OR Apache-2.0

use goalscope_core::behavior::{
    build_dataset, evaluate, fit_logistic_l1, make_threshold_policy, pearson, stability_study, subset_study, vif,
    BehaviorError, DatasetConfig, Design, Evaluation, FilterCounts, LogisticModel, PlacementKind, StabilityConfig,
    StabilityReport, StudyDataset, SubsetFit,
};
use goalscope_core::maze::FEATURE_NAMES;
use goalscope_core::metrics::{NetPolicy, Policy};
use serde::{Deserialize, Serialize};

use super::{num, progress};
use crate::args::{Placement, StudyArgs, WeightsSource};
use crate::artifacts::RunDir;
use crate::error::CliError;
use crate::weights;

pub const DATASET_FILE: &str = "dataset.csv";
pub const REPORT_FILE: &str = "report.json";

/// Raw-scale fit without the optimizer trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub coefficients: Vec<Coefficient>,
    pub intercept: f64,
    pub lambda: f64,
    pub cycles: usize,
    pub objective: f64,
    pub optimality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub raw: f64,
    pub standardized: f64,
}

impl From<&LogisticModel> for ModelSummary {
    fn from(m: &LogisticModel) -> Self {
        let coefficients = m
            .feature_names
            .iter()
            .zip(m.coefficients.iter().zip(&m.std_coefficients))
            .map(|(name, (&raw, &standardized))| Coefficient { name: name.clone(), raw, standardized })
            .collect();
        ModelSummary {
            coefficients,
            intercept: m.intercept,
            lambda: m.lambda,
            cycles: m.cycles,
            objective: m.objective,
            optimality_gap: m.optimality_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub name: String,
    /// `None` when the column is an exact linear combination of the others.
    pub vif: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCorrelation {
    pub name: String,
    pub pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub policy: String,
    pub filters: FilterCounts,
    pub rows: usize,
    pub positives: usize,
    pub features: Vec<String>,
    pub warnings: Vec<String>,
    pub model: Option<ModelSummary>,
    pub training: Option<Evaluation>,
    pub stability: Option<StabilityReport>,
    pub vif: Vec<VifEntry>,
    pub label_correlations: Vec<LabelCorrelation>,
    pub subsets: Vec<SubsetFit>,
}

fn validate(a: &StudyArgs) -> Result<(), CliError> {
    a.common.validate()?;
    let bad = |m: String| Err(CliError::Config(m));
    if !(a.lambda.is_finite() && a.lambda >= 0.0) {
        return bad(format!("--lambda must be a finite non-negative number, got {}", a.lambda));
    }
    if !(a.tol.is_finite() && a.tol > 0.0) {
        return bad(format!("--tol must be positive, got {}", a.tol));
    }
    if a.splits == 0 {
        return bad("--splits must be at least 1".into());
    }
    if !(0.0..1.0).contains(&a.val_frac) {
        return bad(format!("--val-frac must lie in [0, 1), got {}", a.val_frac));
    }
    if a.max_steps == Some(0) {
        return bad("--max-steps must be at least 1".into());
    }
    if a.subsets > 0 && !(1..=FEATURE_NAMES.len()).contains(&a.subset_size) {
        return bad(format!("--subset-size must lie in 1..={}", FEATURE_NAMES.len()));
    }
    feature_list(a).map(|_| ())
}

fn feature_list(a: &StudyArgs) -> Result<Vec<String>, CliError> {
    match a.features.as_str() {
        "all" => Ok(FEATURE_NAMES.iter().map(|s| s.to_string()).collect()),
        "planted" if a.common.weights == WeightsSource::Threshold => {
            Ok(a.rule.planted().iter().map(|(n, _)| n.to_string()).collect())
        }
        "planted" => Err(CliError::Config("`--features planted` needs `--weights threshold`".into())),
        list => {
            let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
            for n in &names {
                if !FEATURE_NAMES.contains(&n.as_str()) {
                    return Err(CliError::Config(format!("unknown feature `{n}`")));
                }
            }
            Ok(names)
        }
    }
}

fn placement(p: Placement) -> PlacementKind {
    match p {
        Placement::Uniform => PlacementKind::Uniform,
        Placement::TopRight => PlacementKind::TopRight,
    }
}

/// Rollouts for every seed, merged in seed order.
fn dataset(a: &StudyArgs) -> Result<StudyDataset, CliError> {
    let c = &a.common;
    let config = DatasetConfig {
        seeds: c.seeds.start..c.seeds.end,
        inner_size: c.size,
        max_steps: a.max_steps.unwrap_or(2 * c.size * c.size),
        placement: placement(a.placement),
    };
    let (loaded, policy_id) = match c.weights {
        WeightsSource::Threshold => (None, format!("threshold:{}", serde_json::to_string(&a.rule)?)),
        _ => {
            let w = weights::load(c)?;
            let id = w.id.clone();
            (Some(w), id)
        }
    };
    let parts = c.map_seeds(|seed| {
        let one = DatasetConfig { seeds: seed..seed + 1, ..config.clone() };
        let policy: Box<dyn Policy> = match &loaded {
            Some(w) => Box::new(NetPolicy::plain(&w.net)),
            None => Box::new(make_threshold_policy(a.rule)),
        };
        Ok(build_dataset(policy.as_ref(), &policy_id, &one)?)
    })?;
    let mut rows = Vec::new();
    let mut filters = FilterCounts::default();
    let mut provenance = None;
    for part in parts {
        let f = part.provenance.filters;
        filters.total += f.total;
        filters.cheese_in_top_right += f.cheese_in_top_right;
        filters.no_decision_square += f.no_decision_square;
        filters.kept += f.kept;
        rows.extend(part.rows);
        provenance.get_or_insert(part.provenance);
    }
    let mut provenance = provenance.expect("seed range is non-empty");
    provenance.config = config;
    provenance.filters = filters;
    Ok(StudyDataset { rows, provenance })
}

pub fn run(a: &StudyArgs) -> Result<(), CliError> {
    validate(a)?;
    let features = feature_list(a)?;
    progress("study", format!("rolling out seeds {}", a.common.seeds));
    let ds = dataset(a)?;
    let mut out = RunDir::create(&a.common.out)?;

    let header: Vec<&str> = std::iter::once("seed").chain(FEATURE_NAMES).chain(["reached_cheese"]).collect();
    out.write_csv(
        DATASET_FILE,
        &header,
        ds.rows.iter().map(|r| {
            std::iter::once(r.seed.to_string())
                .chain(r.values.iter().map(|&v| num(v)))
                .chain([r.reached_cheese.map_or(String::new(), |b| b.to_string())])
                .collect::<Vec<_>>()
        }),
    )?;

    let positives = ds.rows.iter().filter(|r| r.reached_cheese == Some(true)).count();
    let mut report = StudyReport {
        policy: ds.provenance.policy.clone(),
        filters: ds.provenance.filters,
        rows: ds.rows.len(),
        positives,
        features: features.clone(),
        warnings: Vec::new(),
        model: None,
        training: None,
        stability: None,
        vif: Vec::new(),
        label_correlations: Vec::new(),
        subsets: Vec::new(),
    };
    if ds.rows.is_empty() {
        report.warnings.push("no rows survived filtering; nothing to fit".into());
    } else {
        analyze(a, &ds, &features, &mut report)?;
    }
    for w in &report.warnings {
        progress("study", format!("warning: {w}"));
    }
    out.write_json(REPORT_FILE, &report)?;
    out.finish("study", a, &report.policy)?;
    Ok(())
}

fn analyze(a: &StudyArgs, ds: &StudyDataset, features: &[String], report: &mut StudyReport) -> Result<(), CliError> {
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    let x = Design::from_dataset(ds, &names)?;
    let labels: Vec<f64> = x.labels.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    report.label_correlations = (0..names.len())
        .map(|j| LabelCorrelation { name: names[j].into(), pearson: pearson(&x.column(j), &labels).ok() })
        .collect();
    match vif(&x) {
        Ok(v) => {
            report.vif = names
                .iter()
                .zip(v)
                .map(|(n, v)| VifEntry { name: n.to_string(), vif: v.is_finite().then_some(v), flagged: v > 4.0 })
                .collect()
        }
        Err(e) => report.warnings.push(format!("VIF skipped: {e}")),
    }
    let model = match fit_logistic_l1(&x, a.lambda, a.tol) {
        Ok(m) => m,
        Err(e @ (BehaviorError::SingleClass | BehaviorError::TooFewRows { .. })) => {
            report.warnings.push(format!("regression skipped: {e}"));
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    report.training = Some(evaluate(&model, &x)?);
    report.model = Some(ModelSummary::from(&model));
    let cfg = StabilityConfig { n_splits: a.splits, val_frac: a.val_frac, lambda: a.lambda, tol: a.tol, seed: a.split_seed };
    match stability_study(&x, &cfg) {
        Ok(s) => report.stability = Some(s),
        Err(e @ BehaviorError::TooFewRows { .. }) => report.warnings.push(format!("resplitting skipped: {e}")),
        Err(e) => return Err(e.into()),
    }
    if a.subsets > 0 {
        let full = Design::from_dataset(ds, &FEATURE_NAMES)?;
        report.subsets = subset_study(&full, a.subsets, a.subset_size, a.lambda, a.split_seed)?;
    }
    Ok(())
}
