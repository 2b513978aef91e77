// SPDX-License-Identifier: MIT OR Apache-2.0

use goalscope_core::behavior::BehaviorError;
use goalscope_core::interventions::InterventionError;
use goalscope_core::maze::MazeError;
use goalscope_core::metrics::MetricsError;
use goalscope_core::net::NetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Rejected before any work started; exits with status 2.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("png: {0}")]
    Png(#[from] png::EncodingError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
