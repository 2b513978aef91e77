// SPDX-License-Identifier: MIT OR Apache-2.0

//! Procedural mazes, a small inference engine for maze-solving policies, and
//! the tooling to probe, steer and summarize them.

pub mod behavior;
pub mod interventions;
pub mod metrics;
pub mod maze;
pub mod net;
pub mod render;
pub mod rng;
