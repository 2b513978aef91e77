// SPDX-License-Identifier: MIT OR Apache-2.0

//! An analytically wired goal network used as a test oracle.
//!
//! Nothing here is trained. The weights implement, in order:
//!
//! 1. Palette decoding at pixel level (walkable, agent, cheese masks).
//! 2. A stride-4 convolution into the 128×16×16 tap. Forty-eight channels
//!    carry the pixel masks in space-to-depth form. The goal channels hold
//!    1.0 at the cheese's activation cell `round(15g/24)` and zero elsewhere.
//!    A per-position bias selects each game square's representative pixel,
//!    because that rounding is not translation invariant at pixel level.
//! 3. A head that reads the tap back to game resolution. Goal evidence
//!    becomes two sources: "weak" when the weighted goal sum exceeds 2, and
//!    "strong" when it exceeds 8. A third source is the exact cheese square
//!    and a fourth is the grid's top-right corner. The head then runs
//!    `horizon` steps of wall-masked breadth-first propagation from each
//!    source and scores each move by how much closer it brings the agent to
//!    every source.
//!
//! The move scores are `sharpness × Σ gain_k · Δacc_k`, with a large penalty
//! for stepping into a wall and a zero score for NOOP.

use std::collections::BTreeMap;

use super::{ArchitectureDescriptor, Layer, NetError, PolicyNetwork, Tensor, DEFAULT_TAP, N_ACTIONS};
use crate::interventions::ALL_CHEESE;
use crate::maze::GRID;
use crate::net::ops::resize_source;
use crate::render::OBS;

/// Goal channels in the order they are enabled; channel 55 comes first.
pub const GOAL_ORDER: [usize; 11] = [55, 8, 77, 82, 88, 89, 113, 7, 42, 44, 99];

const SUB: usize = 4;
const STRUCT_KINDS: usize = 3;
const N_STRUCT: usize = STRUCT_KINDS * SUB * SUB;

const GAIN_WEAK: f32 = 1.0;
const GAIN_STRONG: f32 = 1.0;
const GAIN_CHEESE: f32 = 1.5;
const GAIN_PRIOR: f32 = 0.75;
const WALL_PENALTY: f32 = 8.0;
/// Larger than any move score, so `relu(score + BIG·agent − BIG)` selects the
/// agent's square.
const BIG: f32 = 4096.0;
/// Larger than the five-cell neighborhood sum in the propagation step.
const BLOCK: f32 = 6.0;
const WEAK_AT: f32 = 1.0;
const STRONG_AT: f32 = 7.0;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticConfig {
    /// Number of goal channels, taken from the front of [`GOAL_ORDER`].
    pub n_goal_channels: usize,
    /// Extra name for the tap (the default tap name is always registered).
    pub tap: String,
    /// Inverse temperature of the action softmax.
    pub sharpness: f32,
    /// Propagation steps; distances beyond it look flat to the head.
    pub horizon: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { n_goal_channels: GOAL_ORDER.len(), tap: DEFAULT_TAP.into(), sharpness: 4.0, horizon: horizon_for(GRID) }
    }
}

/// Longest path in a generated maze of `inner_size`: one less than the
/// number of free cells, `2k² − 1` for `k = (inner_size + 1) / 2`.
pub fn horizon_for(inner_size: usize) -> usize {
    let k = inner_size.div_ceil(2);
    2 * k * k - 2
}

/// The 48 structure channels: the lowest tap channels outside the goal set.
pub fn structure_channels() -> Vec<usize> {
    (0..128).filter(|c| !ALL_CHEESE.contains(c)).take(N_STRUCT).collect()
}

/// Activation cell of image-space game index `g`.
fn cell_of(g: usize) -> usize {
    (15 * g + 12) / 24
}

fn rep_pixel(g: usize) -> usize {
    resize_source(g, OBS, GRID)
}

/// Cell offset from a representative pixel's own 4×4 cell to its target cell.
fn cell_shift(g: usize) -> isize {
    cell_of(g) as isize - (rep_pixel(g) / SUB) as isize
}

/// Bias plane: 0 on representative pixels whose shifts are `(dy, dx)`, −1 elsewhere.
fn shift_mask(dy: isize, dx: isize) -> Vec<f32> {
    let mut plane = vec![-1.0; OBS * OBS];
    for gy in 0..GRID {
        for gx in 0..GRID {
            if cell_shift(gy) == dy && cell_shift(gx) == dx {
                plane[rep_pixel(gy) * OBS + rep_pixel(gx)] = 0.0;
            }
        }
    }
    plane
}

const SHIFTS: [(isize, isize); 9] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)];

struct ConvW {
    o: usize,
    c: usize,
    k: usize,
    w: Vec<f32>,
    b: Vec<f32>,
}

impl ConvW {
    fn new(o: usize, c: usize, k: usize) -> Self {
        Self { o, c, k, w: vec![0.0; o * c * k * k], b: vec![0.0; o] }
    }

    fn set(&mut self, o: usize, c: usize, ky: usize, kx: usize, v: f32) {
        self.w[((o * self.c + c) * self.k + ky) * self.k + kx] = v;
    }
}

#[derive(Default)]
struct Builder {
    layers: Vec<Layer>,
    weights: BTreeMap<String, Tensor>,
}

impl Builder {
    fn conv_layer(prefix: &str, cw: ConvW, stride: usize, pad: usize, weights: &mut BTreeMap<String, Tensor>) -> Layer {
        let layer = Layer::Conv { k: cw.k, in_ch: cw.c, out_ch: cw.o, stride, pad };
        weights.insert(format!("{prefix}.weight"), Tensor::new(vec![cw.o, cw.c, cw.k, cw.k], cw.w).expect("dims"));
        weights.insert(format!("{prefix}.bias"), Tensor::new(vec![cw.o], cw.b).expect("dims"));
        layer
    }

    fn next(&self) -> String {
        format!("layers.{}", self.layers.len())
    }

    fn conv(&mut self, cw: ConvW, stride: usize, pad: usize) {
        let p = self.next();
        let l = Self::conv_layer(&p, cw, stride, pad, &mut self.weights);
        self.layers.push(l);
    }

    fn pos_bias(&mut self, channels: usize, side: usize, data: Vec<f32>) {
        let p = self.next();
        self.weights.insert(format!("{p}.bias"), Tensor::new(vec![channels, side, side], data).expect("dims"));
        self.layers.push(Layer::PosBias { channels, height: side, width: side });
    }

    /// Residual block `[conv_a, relu, conv_b]`; the convs sit at body indices 0 and 2.
    fn residual(&mut self, a: (ConvW, usize), b: (ConvW, usize)) {
        let p = self.next();
        let la = Self::conv_layer(&format!("{p}.body.0"), a.0, 1, a.1, &mut self.weights);
        let lb = Self::conv_layer(&format!("{p}.body.2"), b.0, 1, b.1, &mut self.weights);
        self.layers.push(Layer::Residual { body: vec![la, Layer::Relu, lb] });
    }
}

/// Build the synthetic goal network.
pub fn build_synthetic_policy(cfg: &SyntheticConfig) -> Result<PolicyNetwork, NetError> {
    let n_goal = cfg.n_goal_channels;
    if !(1..=GOAL_ORDER.len()).contains(&n_goal) {
        return Err(NetError::Descriptor(format!("n_goal_channels must be in 1..=11, got {n_goal}")));
    }
    if !(cfg.sharpness.is_finite() && cfg.sharpness > 0.0) || cfg.horizon == 0 {
        return Err(NetError::Descriptor("sharpness must be positive and horizon nonzero".into()));
    }
    let goals = &GOAL_ORDER[..n_goal];
    let structure = structure_channels();
    let mut b = Builder::default();

    // Palette decoding: d0 = G, d1 = R − B, d2 = B − R, d3 = G − R − B.
    let (r, g, bl) = (0, 1, 2);
    let mut cw = ConvW::new(4, 3, 1);
    cw.set(0, g, 0, 0, 1.0);
    cw.set(1, r, 0, 0, 1.0);
    cw.set(1, bl, 0, 0, -1.0);
    cw.set(2, bl, 0, 0, 1.0);
    cw.set(2, r, 0, 0, -1.0);
    cw.set(3, g, 0, 0, 1.0);
    cw.set(3, r, 0, 0, -1.0);
    cw.set(3, bl, 0, 0, -1.0);
    b.conv(cw, 1, 0);
    b.layers.push(Layer::Relu);

    // Masks: walk, agent, cheese, then nine cheese copies for the shift masks.
    let mut cw = ConvW::new(12, 4, 1);
    cw.set(0, 0, 0, 0, 1.0);
    for (o, (x, y)) in [(1, (2, 3)), (2, (1, 3))] {
        cw.set(o, x, 0, 0, 1.0);
        cw.set(o, y, 0, 0, 1.0);
    }
    for m in 0..9 {
        cw.set(3 + m, 1, 0, 0, 1.0);
        cw.set(3 + m, 3, 0, 0, 1.0);
    }
    b.conv(cw, 1, 0);
    let mut bias = vec![0.0; 3 * OBS * OBS];
    for &(dy, dx) in &SHIFTS {
        bias.extend(shift_mask(dy, dx));
    }
    b.pos_bias(12, OBS, bias);
    b.layers.push(Layer::Relu);

    // Into the tap: space-to-depth structure plus goal bumps.
    let mut cw = ConvW::new(128, 12, 12);
    for q in 0..STRUCT_KINDS {
        for i in 0..SUB {
            for j in 0..SUB {
                cw.set(structure[q * 16 + i * SUB + j], q, SUB + i, SUB + j, 1.0);
            }
        }
    }
    for &goal in goals {
        for (m, &(dy, dx)) in SHIFTS.iter().enumerate() {
            let oy = (SUB as isize - SUB as isize * dy) as usize;
            let ox = (SUB as isize - SUB as isize * dx) as usize;
            for i in 0..SUB {
                for j in 0..SUB {
                    cw.set(goal, 3 + m, oy + i, ox + j, 1.0);
                }
            }
        }
    }
    b.conv(cw, SUB, SUB);
    b.residual((ConvW::new(128, 128, 1), 0), (ConvW::new(128, 128, 1), 0));
    // The residual body above is [conv, relu, conv] with zero weights; the
    // tap sits on its output, after the skip addition.
    let tap_index = b.layers.len() - 1;

    // Clamp structure to [0, 1] and threshold the weighted goal sum.
    let mut cw = ConvW::new(2 * N_STRUCT + 4, 128, 1);
    for (k, &ch) in structure.iter().enumerate() {
        cw.set(2 * k, ch, 0, 0, 1.0);
        cw.set(2 * k + 1, ch, 0, 0, 1.0);
        cw.b[2 * k + 1] = -1.0;
    }
    let per_channel = GOAL_ORDER.len() as f32 / n_goal as f32;
    for (o, at) in [(0, WEAK_AT), (1, WEAK_AT + 1.0), (2, STRONG_AT), (3, STRONG_AT + 1.0)] {
        for &goal in goals {
            cw.set(2 * N_STRUCT + o, goal, 0, 0, per_channel);
        }
        cw.b[2 * N_STRUCT + o] = -at;
    }
    b.conv(cw, 1, 0);
    b.layers.push(Layer::Relu);

    // Back to space-to-depth: clamped structure, then shifted copies of the
    // weak and strong maps, each spread over all 16 sub-pixels.
    let copies = 2 * SHIFTS.len();
    let mut cw = ConvW::new(N_STRUCT + copies * 16, 2 * N_STRUCT + 4, 3);
    for k in 0..N_STRUCT {
        cw.set(k, 2 * k, 1, 1, 1.0);
        cw.set(k, 2 * k + 1, 1, 1, -1.0);
    }
    for t in 0..2 {
        for (m, &(dy, dx)) in SHIFTS.iter().enumerate() {
            for u in 0..16 {
                let o = N_STRUCT + (t * SHIFTS.len() + m) * 16 + u;
                let (ky, kx) = ((1 + dy) as usize, (1 + dx) as usize);
                cw.set(o, 2 * N_STRUCT + 2 * t, ky, kx, 1.0);
                cw.set(o, 2 * N_STRUCT + 2 * t + 1, ky, kx, -1.0);
            }
        }
    }
    b.conv(cw, 1, 1);
    b.layers.push(Layer::PixelShuffle { factor: SUB });

    let pixel_ch = STRUCT_KINDS + copies;
    let mut bias = vec![0.0; STRUCT_KINDS * OBS * OBS];
    for _ in 0..2 {
        for &(dy, dx) in &SHIFTS {
            bias.extend(shift_mask(dy, dx));
        }
    }
    b.pos_bias(pixel_ch, OBS, bias);
    b.layers.push(Layer::Relu);
    b.layers.push(Layer::Resize { height: GRID, width: GRID });

    // Game level: [walk, agent, r_weak, r_strong, r_cheese, r_prior, acc × 4].
    const WALK: usize = 0;
    const AGENT: usize = 1;
    const R0: usize = 2;
    const ACC0: usize = 6;
    const STATE: usize = 10;
    let mut cw = ConvW::new(STATE, pixel_ch, 1);
    cw.set(WALK, 0, 0, 0, 1.0);
    cw.set(AGENT, 1, 0, 0, 1.0);
    for base in [R0, ACC0] {
        for m in 0..SHIFTS.len() {
            cw.set(base, STRUCT_KINDS + m, 0, 0, 1.0);
            cw.set(base + 1, STRUCT_KINDS + SHIFTS.len() + m, 0, 0, 1.0);
        }
        cw.set(base + 2, 2, 0, 0, 1.0);
        for k in 0..4 {
            cw.set(base + k, 0, 0, 0, 1.0);
            cw.b[base + k] = -1.0;
        }
    }
    b.conv(cw, 1, 0);
    let mut bias = vec![0.0; STATE * GRID * GRID];
    for ch in [R0 + 3, ACC0 + 3] {
        // Image row 0, column 24: game square (24, 24).
        bias[ch * GRID * GRID + GRID - 1] = 1.0;
    }
    b.pos_bias(STATE, GRID, bias);
    b.layers.push(Layer::Relu);

    // Propagation: r' = min(1, Σ_plus r) on walkable cells; acc += r'.
    const PLUS: [(usize, usize); 5] = [(1, 1), (0, 1), (2, 1), (1, 0), (1, 2)];
    for _ in 0..cfg.horizon {
        let mut a = ConvW::new(12, STATE, 3);
        for k in 0..4 {
            for (o, extra) in [(k, 0.0), (4 + k, 1.0)] {
                for &(ky, kx) in &PLUS {
                    a.set(o, R0 + k, ky, kx, 1.0);
                }
                a.set(o, WALK, 1, 1, BLOCK);
                a.b[o] = -BLOCK - extra;
            }
            a.set(8 + k, R0 + k, 1, 1, 1.0);
        }
        let mut c = ConvW::new(STATE, 12, 1);
        for k in 0..4 {
            c.set(R0 + k, k, 0, 0, 1.0);
            c.set(R0 + k, 4 + k, 0, 0, -1.0);
            c.set(R0 + k, 8 + k, 0, 0, -1.0);
            c.set(ACC0 + k, k, 0, 0, 1.0);
            c.set(ACC0 + k, 4 + k, 0, 0, -1.0);
        }
        b.residual((a, 1), (c, 0));
    }

    // Move scores gathered at the agent's square.
    let gains = [GAIN_WEAK, GAIN_STRONG, GAIN_CHEESE, GAIN_PRIOR];
    // Image-space offsets of UP, RIGHT, DOWN, LEFT.
    let offsets: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 1), (1, 0)];
    let mut cw = ConvW::new(8, STATE, 3);
    for (a, &(ky, kx)) in offsets.iter().enumerate() {
        for (o, sign) in [(a, 1.0), (4 + a, -1.0)] {
            for (k, &gain) in gains.iter().enumerate() {
                cw.set(o, ACC0 + k, ky, kx, sign * gain);
                cw.set(o, ACC0 + k, 1, 1, -sign * gain);
            }
            cw.set(o, WALK, ky, kx, sign * WALL_PENALTY);
            cw.set(o, AGENT, 1, 1, BIG);
            cw.b[o] = -sign * WALL_PENALTY - BIG;
        }
    }
    b.conv(cw, 1, 1);
    b.layers.push(Layer::Relu);
    b.layers.push(Layer::Flatten);
    let plane = GRID * GRID;
    let mut w = vec![0.0; N_ACTIONS * 8 * plane];
    for a in 0..4 {
        for p in 0..plane {
            w[a * 8 * plane + a * plane + p] = cfg.sharpness;
            w[a * 8 * plane + (4 + a) * plane + p] = -cfg.sharpness;
        }
    }
    let p = b.next();
    b.weights.insert(format!("{p}.weight"), Tensor::new(vec![N_ACTIONS, 8 * plane], w)?);
    b.weights.insert(format!("{p}.bias"), Tensor::zeros(&[N_ACTIONS]));
    b.layers.push(Layer::Dense { in_dim: 8 * plane, out_dim: N_ACTIONS });
    b.layers.push(Layer::Softmax);

    let mut taps = BTreeMap::new();
    taps.insert(DEFAULT_TAP.to_string(), tap_index);
    taps.insert(cfg.tap.clone(), tap_index);
    let descriptor = ArchitectureDescriptor { input: vec![3, OBS, OBS], layers: b.layers, taps };
    PolicyNetwork::new(descriptor, b.weights)
}
