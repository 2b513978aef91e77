// SPDX-License-Identifier: MIT OR Apache-2.0

use goalscope_core::interventions::InterventionSpec;
use goalscope_core::maze::{generate_maze, Action, CheesePlacement, Coord, MazeError, MazeState};
use goalscope_core::metrics::{NetPolicy, Policy};
use goalscope_core::net::N_ACTIONS;
use serde::{Deserialize, Serialize};

use super::steer::steering_spec;
use super::{median, num, progress};
use crate::args::{finite, DecisionProbsArgs, SteerVector};
use crate::artifacts::RunDir;
use crate::cache::DeltaCache;
use crate::error::CliError;
use crate::weights;

pub const CSV_FILE: &str = "decision_probs.csv";
pub const JSON_FILE: &str = "decision_probs.json";

/// The decision square and the first move from it toward each landmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Landmarks {
    pub decision: Coord,
    pub cheese_action: Action,
    pub top_right_action: Action,
}

/// `None` when the maze has no decision square.
pub fn landmark_actions(m: &MazeState) -> Result<Option<Landmarks>, MazeError> {
    let cheese = m.cheese.ok_or(MazeError::NoCheese)?;
    let start = m.with_agent(m.start_square());
    let Some(decision) = start.decision_square(cheese)? else { return Ok(None) };
    let first = |to: Coord| -> Result<Action, MazeError> { Ok(start.shortest_path(decision, to)?.actions[0]) };
    Ok(Some(Landmarks {
        decision,
        cheese_action: first(cheese)?,
        top_right_action: first(start.reachable_top_right())?,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Original,
    Cheese,
    TopRight,
    Compose,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::Original, Condition::Cheese, Condition::TopRight, Condition::Compose];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Cheese => "cheese",
            Condition::TopRight => "top_right",
            Condition::Compose => "compose",
        }
    }

    fn vector(self) -> Option<SteerVector> {
        match self {
            Condition::Original => None,
            Condition::Cheese => Some(SteerVector::Cheese),
            Condition::TopRight => Some(SteerVector::TopRight),
            Condition::Compose => Some(SteerVector::Compose),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub seed: u64,
    pub condition: Condition,
    pub decision_square: Coord,
    pub cheese_action: Action,
    pub top_right_action: Action,
    pub p_cheese_action: f64,
    pub p_top_right_action: f64,
    pub probs: [f64; N_ACTIONS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMedians {
    pub condition: Condition,
    pub median_p_cheese_action: Option<f64>,
    pub median_p_top_right_action: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub rows: Vec<DecisionRow>,
    pub skipped: Vec<Skipped>,
    pub medians: Vec<ConditionMedians>,
}

pub fn run(a: &DecisionProbsArgs) -> Result<(), CliError> {
    a.common.validate()?;
    finite("--alpha", a.alpha)?;
    finite("--alpha-tr", a.alpha_tr)?;
    let w = weights::load(&a.common)?;
    let cache = DeltaCache::from_env();
    let per_seed = a.common.map_seeds(|seed| -> Result<Result<Vec<DecisionRow>, Skipped>, CliError> {
        progress("decision-probs", format!("seed {seed}"));
        let m = generate_maze(seed, a.common.size)?.place_cheese(CheesePlacement::Uniform { seed })?;
        let Some(l) = landmark_actions(&m)? else {
            return Ok(Err(Skipped { seed, reason: "no decision square".into() }));
        };
        let at = m.with_agent(l.decision);
        let mut rows = Vec::new();
        for cond in Condition::ALL {
            let spec = match cond.vector() {
                None => InterventionSpec::default(),
                Some(v) => steering_spec(&w.net, &w.id, &cache, &m, v, a.alpha, a.alpha_tr)?.0,
            };
            let d = NetPolicy::new(&w.net, spec).act(&at)?;
            rows.push(DecisionRow {
                seed,
                condition: cond,
                decision_square: l.decision,
                cheese_action: l.cheese_action,
                top_right_action: l.top_right_action,
                p_cheese_action: d.probs[l.cheese_action.index()],
                p_top_right_action: d.probs[l.top_right_action.index()],
                probs: d.probs,
            });
        }
        Ok(Ok(rows))
    })?;
    let (mut rows, mut skipped) = (Vec::new(), Vec::new());
    for r in per_seed {
        match r {
            Ok(rs) => rows.extend(rs),
            Err(s) => {
                progress("decision-probs", format!("seed {} skipped: {}", s.seed, s.reason));
                skipped.push(s);
            }
        }
    }
    let medians = Condition::ALL
        .into_iter()
        .map(|c| {
            let of = |f: fn(&DecisionRow) -> f64| median(rows.iter().filter(|r| r.condition == c).map(f).collect());
            ConditionMedians {
                condition: c,
                median_p_cheese_action: of(|r| r.p_cheese_action),
                median_p_top_right_action: of(|r| r.p_top_right_action),
            }
        })
        .collect();

    let mut out = RunDir::create(&a.common.out)?;
    let header = [
        "seed", "condition", "decision_col", "decision_row", "cheese_action", "top_right_action", "p_cheese_action",
        "p_top_right_action", "p_up", "p_right", "p_down", "p_left", "p_noop",
    ];
    out.write_csv(
        CSV_FILE,
        &header,
        rows.iter().map(|r| {
            let mut v = vec![
                r.seed.to_string(),
                r.condition.name().to_string(),
                r.decision_square.col.to_string(),
                r.decision_square.row.to_string(),
                format!("{:?}", r.cheese_action).to_uppercase(),
                format!("{:?}", r.top_right_action).to_uppercase(),
                num(r.p_cheese_action),
                num(r.p_top_right_action),
            ];
            v.extend(r.probs.iter().map(|&p| num(p)));
            v
        }),
    )?;
    out.write_json(JSON_FILE, &DecisionReport { rows, skipped, medians })?;
    out.finish("decision-probs", a, &w.id)?;
    Ok(())
}
