// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rasterization of a maze into the 64×64 RGB observation.
//!
//! Game square `g` on either axis owns pixels `[floor(g·64/25), floor((g+1)·64/25))`,
//! two or three pixels wide. Image rows run top to bottom, so game row `r`
//! lands on image block `24 - r`.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::maze::{Coord, MazeState, GRID};

/// Observation side in pixels.
pub const OBS: usize = 64;

/// Flat RGB colors; chosen so the synthetic network can decode them with
/// linear maps and ReLUs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Palette {
    pub wall: [f32; 3],
    pub free: [f32; 3],
    pub cheese: [f32; 3],
    pub agent: [f32; 3],
    pub agent_on_cheese: [f32; 3],
}

pub const PALETTE: Palette = Palette {
    wall: [0.0, 0.0, 0.0],
    free: [1.0, 1.0, 1.0],
    cheese: [1.0, 1.0, 0.0],
    agent: [0.0, 1.0, 1.0],
    agent_on_cheese: [0.0, 1.0, 0.0],
};

/// First pixel of game block `g` (`g` in `0..=25`).
pub fn block_start(g: usize) -> usize {
    g * OBS / GRID
}

/// Image-space block index for a game row.
pub fn image_row(row: usize) -> usize {
    GRID - 1 - row
}

/// 64×64×3 image, row-major with channels last, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pixels: Vec<f32>,
}

impl Observation {
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f32 {
        self.pixels[(y * OBS + x) * 3 + ch]
    }

    /// Channel-first copy, the engine's input layout.
    pub fn to_chw(&self) -> Vec<f32> {
        let mut out = vec![0.0; 3 * OBS * OBS];
        for y in 0..OBS {
            for x in 0..OBS {
                for ch in 0..3 {
                    out[ch * OBS * OBS + y * OBS + x] = self.get(y, x, ch);
                }
            }
        }
        out
    }

    /// Bytes after 8-bit quantization, row-major RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    /// 64-bit digest of the quantized buffer (leading SHA-256 bytes).
    pub fn quantized_hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_rgb8());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(head)
    }
}

/// Render `m` with the fixed palette.
pub fn render_observation(m: &MazeState) -> Observation {
    let mut pixels = vec![0.0f32; OBS * OBS * 3];
    for row in 0..GRID {
        for col in 0..GRID {
            let c = Coord::new(col, row);
            let color = square_color(m, c);
            let (y0, y1) = (block_start(image_row(row)), block_start(image_row(row) + 1));
            let (x0, x1) = (block_start(col), block_start(col + 1));
            for y in y0..y1 {
                for x in x0..x1 {
                    pixels[(y * OBS + x) * 3..(y * OBS + x) * 3 + 3].copy_from_slice(&color);
                }
            }
        }
    }
    Observation { pixels }
}

fn square_color(m: &MazeState, c: Coord) -> [f32; 3] {
    let cheese = m.cheese == Some(c);
    let agent = m.agent == c;
    match (m.is_free(c), cheese, agent) {
        (_, true, true) => PALETTE.agent_on_cheese,
        (_, true, false) => PALETTE.cheese,
        (_, false, true) => PALETTE.agent,
        (true, false, false) => PALETTE.free,
        (false, false, false) => PALETTE.wall,
    }
}
