// SPDX-License-Identifier: MIT OR Apache-2.0

// Each test binary uses a different slice of these helpers.
#![allow(dead_code)]

use std::collections::BTreeMap;

use goalscope_core::net::synthetic::{build_synthetic_policy, horizon_for, SyntheticConfig};
use goalscope_core::net::*;
use goalscope_core::render::OBS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize], scale: f32) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Smallest descriptor that satisfies the tap contract: a stride-4 patch
/// convolution into the 128×16×16 tap, a 1×1 mixer and a dense head.
pub fn tiny_descriptor() -> ArchitectureDescriptor {
    let layers = vec![
        Layer::Conv { k: 4, in_ch: 3, out_ch: 128, stride: 4, pad: 0 },
        Layer::Relu,
        Layer::Conv { k: 1, in_ch: 128, out_ch: 4, stride: 1, pad: 0 },
        Layer::Relu,
        Layer::Flatten,
        Layer::Dense { in_dim: 4 * 16 * 16, out_dim: N_ACTIONS },
        Layer::Softmax,
    ];
    let taps = BTreeMap::from([(DEFAULT_TAP.to_string(), 1)]);
    ArchitectureDescriptor { input: vec![3, OBS, OBS], layers, taps }
}

/// Random weights on [`tiny_descriptor`].
pub fn tiny_net(seed: u64) -> PolicyNetwork {
    let d = tiny_descriptor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = d.param_shapes().into_iter().map(|(name, dims)| {
        let t = random_tensor(&mut rng, &dims, 0.3);
        (name, t)
    });
    PolicyNetwork::new(d.clone(), weights.collect()).unwrap()
}

/// Synthetic goal network with its horizon sized for `inner_size` mazes.
pub fn synthetic(inner_size: usize, sharpness: f32) -> PolicyNetwork {
    build_synthetic_policy(&SyntheticConfig { sharpness, horizon: horizon_for(inner_size), ..Default::default() }).unwrap()
}

/// Row-major argmax `(y, x, value)` of one channel of a C×16×16 tensor.
pub fn channel_argmax(t: &Tensor, c: usize) -> (usize, usize, f32) {
    let plane = t.channel(c);
    let (i, &v) = plane.iter().enumerate().fold((0, &f32::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
    (i / 16, i % 16, v)
}
