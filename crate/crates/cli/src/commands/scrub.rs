// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use goalscope_core::metrics::{
    channels_by_name, control_channels, decision_flip, scrub_row, FlipRates, ScrubReport,
};
use goalscope_core::net::DEFAULT_TAP;
use serde::{Deserialize, Serialize};

use super::{num, progress};
use crate::args::ScrubArgs;
use crate::artifacts::RunDir;
use crate::error::CliError;
use crate::weights;

pub const JSON_FILE: &str = "scrub.json";
pub const CSV_FILE: &str = "scrub.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrubOutput {
    pub report: ScrubReport,
    pub flips: FlipRates,
}

pub fn parse_channels(s: &str, n_channels: usize) -> Result<BTreeSet<usize>, CliError> {
    if let Some(set) = channels_by_name(s) {
        return Ok(set);
    }
    s.split(',')
        .map(|t| match t.trim().parse::<usize>() {
            Ok(c) if c < n_channels => Ok(c),
            _ => Err(CliError::Config(format!("bad channel `{t}` (expected 0..{n_channels} or a set name)"))),
        })
        .collect()
}

pub fn run(a: &ScrubArgs) -> Result<(), CliError> {
    a.common.validate()?;
    let w = weights::load(&a.common)?;
    let n_channels = w.net.tap_shape(DEFAULT_TAP)?[0];
    let channels = parse_channels(&a.channels, n_channels)?;
    let control = control_channels(&channels, n_channels, a.control_seed);
    let per_seed = a.common.map_seeds(|seed| {
        progress("scrub", format!("seed {seed}"));
        let row = scrub_row(&w.net, seed, a.common.size, &channels, &control)?;
        let flip = decision_flip(&w.net, seed, a.common.size, &channels)?;
        Ok((row, flip))
    })?;
    let (rows, flips): (Vec<_>, Vec<_>) = per_seed.into_iter().unzip();
    let report = ScrubReport::from_rows(channels, control, rows);
    let flips = FlipRates::from_outcomes(&flips);

    let mut out = RunDir::create(&a.common.out)?;
    out.write_csv(
        CSV_FILE,
        &["seed", "same_cheese", "random_cheese", "control_same_cheese", "control_random_cheese"],
        report.rows.iter().map(|r| {
            vec![
                r.seed.to_string(),
                num(r.same_cheese),
                num(r.random_cheese),
                num(r.control_same_cheese),
                num(r.control_random_cheese),
            ]
        }),
    )?;
    out.write_json(JSON_FILE, &ScrubOutput { report, flips })?;
    out.finish("scrub", a, &w.id)?;
    Ok(())
}
