// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;

use goalscope_core::maze::{check_size, generate_maze, MazeState};
use goalscope_core::render::{render_observation, OBS};

use crate::args::{MazeArgs, RenderArgs};
use crate::artifacts::encode_png;
use crate::error::CliError;

fn build(a: &MazeArgs) -> Result<MazeState, CliError> {
    check_size(a.size).map_err(|e| CliError::Config(e.to_string()))?;
    let m = generate_maze(a.seed, a.size)?;
    Ok(match a.cheese.placement(a.seed) {
        Some(p) => m.place_cheese(p)?,
        None => m,
    })
}

/// Maze JSON on standard output.
pub fn maze(a: &MazeArgs) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&build(a)?)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    let obs = render_observation(&build(&a.maze)?);
    let png = encode_png(OBS as u32, OBS as u32, &obs.to_rgb8())?;
    std::fs::write(&a.out, png)?;
    Ok(())
}
