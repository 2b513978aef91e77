// SPDX-License-Identifier: MIT OR Apache-2.0

//! Library half of the `goalscope` binary: argument types, weight loading,
//! artifact writing and one function per subcommand. Tests drive the
//! commands through [`run`] exactly as the binary does.

pub mod args;
pub mod artifacts;
pub mod cache;
pub mod commands;
pub mod error;
pub mod weights;

pub use args::{Cli, Command};
pub use error::CliError;

/// Execute one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Study(a) => commands::study::run(&a),
        Command::Heatmap(a) => commands::heatmap::run(&a),
        Command::Steer(a) => commands::steer::run(&a),
        Command::Scrub(a) => commands::scrub::run(&a),
        Command::DecisionProbs(a) => commands::decision_probs::run(&a),
        Command::Maze(a) => commands::utility::maze(&a),
        Command::Render(a) => commands::utility::render(&a),
    }
}
