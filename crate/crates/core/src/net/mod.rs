// SPDX-License-Identifier: MIT OR Apache-2.0

//! Convolutional policy engine with named tap points.
//!
//! Arithmetic is `f32` storage with `f64` accumulation inside every reduction.
//! Observations enter channel-first (3×64×64). Intervention atoms run on the
//! tensor a tap names, after that layer (and its residual addition) and
//! before anything downstream reads it.

mod io;
mod ops;
pub mod synthetic;
mod tensor;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interventions::InterventionSpec;
use crate::render::{Observation, OBS};

pub use io::{load_weights, read_gsw1, save_weights, sidecar_path, write_gsw1};
pub use ops::{conv2d, conv2d_sparse, dense, max_pool, pixel_shuffle, resize_nearest, SparseKernel};
pub use tensor::Tensor;

/// The tap after the first residual block of the second convolutional block.
pub const DEFAULT_TAP: &str = "block2.res1.out";
/// Shape of the tensor at [`DEFAULT_TAP`].
pub const TAP_SHAPE: [usize; 3] = [128, 16, 16];
/// Number of policy actions.
pub const N_ACTIONS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unknown tap `{0}`")]
    UnknownTap(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("bad magic bytes, expected GSW1")]
    BadMagic,
    #[error("tensor `{name}` has dims {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("weight file ends early")]
    TruncatedFile,
    #[error("tensor `{0}` is missing")]
    MissingTensor(String),
    #[error("unsupported dtype tag {0}")]
    BadDtype(u8),
    #[error("invalid descriptor: {0}")]
    Descriptor(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for NetError {
    fn from(e: std::io::Error) -> Self {
        NetError::Io(e.to_string())
    }
}

/// One layer of the sequential graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv { k: usize, in_ch: usize, out_ch: usize, stride: usize, pad: usize },
    Relu,
    MaxPool {
        k: usize,
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    /// `x + body(x)`.
    Residual { body: Vec<Layer> },
    Flatten,
    Dense { in_dim: usize, out_dim: usize },
    Softmax,
    /// Depth-to-space: `[C·r², H, W]` to `[C, H·r, W·r]`.
    PixelShuffle { factor: usize },
    /// Nearest-neighbor resampling with half-pixel centers.
    Resize { height: usize, width: usize },
    /// Adds a learned per-position bias of shape `[channels, height, width]`.
    PosBias { channels: usize, height: usize, width: usize },
}

impl Layer {
    /// Parameter tensors this layer expects, as `(suffix, dims)`.
    fn params(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Layer::Conv { k, in_ch, out_ch, .. } => {
                vec![("weight", vec![out_ch, in_ch, k, k]), ("bias", vec![out_ch])]
            }
            Layer::Dense { in_dim, out_dim } => vec![("weight", vec![out_dim, in_dim]), ("bias", vec![out_dim])],
            Layer::PosBias { channels, height, width } => vec![("bias", vec![channels, height, width])],
            _ => Vec::new(),
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NetError> {
        let chw = |what: &str| -> Result<(usize, usize, usize), NetError> {
            match *input {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(NetError::Descriptor(format!("{what} needs a C×H×W input, got {input:?}"))),
            }
        };
        match self {
            Layer::Conv { k, in_ch, out_ch, stride, pad } => {
                let (c, h, w) = chw("conv")?;
                if c != *in_ch || *stride == 0 || h + 2 * pad < *k || w + 2 * pad < *k {
                    return Err(NetError::Descriptor(format!("conv {self:?} cannot take {input:?}")));
                }
                Ok(vec![*out_ch, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1])
            }
            Layer::MaxPool { k, stride, pad } => {
                let (c, h, w) = chw("max_pool")?;
                if *stride == 0 || h + 2 * pad < *k || *pad >= *k {
                    return Err(NetError::Descriptor(format!("max_pool {self:?} cannot take {input:?}")));
                }
                Ok(vec![c, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Residual { body } => {
                let mut shape = input.to_vec();
                for l in body {
                    shape = l.output_shape(&shape)?;
                }
                if shape != input {
                    return Err(NetError::Descriptor(format!("residual body maps {input:?} to {shape:?}")));
                }
                Ok(shape)
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense { in_dim, out_dim } => match *input {
                [n] if n == *in_dim => Ok(vec![*out_dim]),
                _ => Err(NetError::Descriptor(format!("dense {self:?} cannot take {input:?}"))),
            },
            Layer::Softmax => match *input {
                [_] => Ok(input.to_vec()),
                _ => Err(NetError::Descriptor("softmax needs a vector".into())),
            },
            Layer::PixelShuffle { factor } => {
                let (c, h, w) = chw("pixel_shuffle")?;
                let r2 = factor * factor;
                if *factor == 0 || c % r2 != 0 {
                    return Err(NetError::Descriptor(format!("pixel_shuffle {factor} cannot take {input:?}")));
                }
                Ok(vec![c / r2, h * factor, w * factor])
            }
            Layer::Resize { height, width } => {
                let (c, _, _) = chw("resize")?;
                if *height == 0 || *width == 0 {
                    return Err(NetError::Descriptor("resize to an empty grid".into()));
                }
                Ok(vec![c, *height, *width])
            }
            Layer::PosBias { channels, height, width } => {
                if input != [*channels, *height, *width] {
                    return Err(NetError::Descriptor(format!("pos_bias {self:?} cannot take {input:?}")));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Layers plus named taps (name → top-level layer index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub input: Vec<usize>,
    pub layers: Vec<Layer>,
    pub taps: BTreeMap<String, usize>,
}

impl ArchitectureDescriptor {
    /// Shapes after every top-level layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NetError> {
        let mut shape = self.input.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            shape = l.output_shape(&shape)?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input != [3, OBS, OBS] {
            return Err(NetError::Descriptor(format!("input must be [3, 64, 64], got {:?}", self.input)));
        }
        let shapes = self.shapes()?;
        if !matches!(self.layers.last(), Some(Layer::Softmax)) || shapes.last().map(Vec::as_slice) != Some(&[N_ACTIONS]) {
            return Err(NetError::Descriptor("the network must end in a softmax over 5 actions".into()));
        }
        if self.layers[..self.layers.len() - 1].contains(&Layer::Softmax) {
            return Err(NetError::Descriptor("softmax is only allowed as the final layer".into()));
        }
        for (name, &i) in &self.taps {
            if i >= self.layers.len() {
                return Err(NetError::Descriptor(format!("tap `{name}` points past the last layer")));
            }
        }
        match self.taps.get(DEFAULT_TAP) {
            Some(&i) if shapes[i] == TAP_SHAPE => Ok(()),
            Some(&i) => Err(NetError::Descriptor(format!("tap `{DEFAULT_TAP}` has shape {:?}", shapes[i]))),
            None => Err(NetError::Descriptor(format!("tap `{DEFAULT_TAP}` is required"))),
        }
    }

    /// Every expected parameter tensor, keyed by its weight-map name.
    pub fn param_shapes(&self) -> BTreeMap<String, Vec<usize>> {
        fn walk(layers: &[Layer], prefix: &str, out: &mut BTreeMap<String, Vec<usize>>) {
            for (i, l) in layers.iter().enumerate() {
                let p = format!("{prefix}.{i}");
                for (suffix, dims) in l.params() {
                    out.insert(format!("{p}.{suffix}"), dims);
                }
                if let Layer::Residual { body } = l {
                    walk(body, &format!("{p}.body"), out);
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(&self.layers, "layers", &mut out);
        out
    }

    pub fn tap_shape(&self, tap: &str) -> Result<Vec<usize>, NetError> {
        let i = *self.taps.get(tap).ok_or_else(|| NetError::UnknownTap(tap.to_string()))?;
        Ok(self.shapes()?[i].clone())
    }

    /// IMPALA-style reference: three blocks of conv, padded 3/2 max-pool and
    /// two residual units, widths 64/128/128, then a 256-unit dense layer.
    pub fn reference() -> ArchitectureDescriptor {
        let mut layers = Vec::new();
        let mut taps = BTreeMap::new();
        let mut in_ch = 3;
        for (b, out_ch) in [64usize, 128, 128].into_iter().enumerate() {
            layers.push(Layer::Conv { k: 3, in_ch, out_ch, stride: 1, pad: 1 });
            layers.push(Layer::MaxPool { k: 3, stride: 2, pad: 1 });
            for r in 0..2 {
                let conv = Layer::Conv { k: 3, in_ch: out_ch, out_ch, stride: 1, pad: 1 };
                layers.push(Layer::Residual { body: vec![Layer::Relu, conv.clone(), Layer::Relu, conv] });
                taps.insert(format!("block{}.res{}.out", b + 1, r + 1), layers.len() - 1);
            }
            in_ch = out_ch;
        }
        layers.extend([
            Layer::Relu,
            Layer::Flatten,
            Layer::Dense { in_dim: 128 * 8 * 8, out_dim: 256 },
            Layer::Relu,
            Layer::Dense { in_dim: 256, out_dim: N_ACTIONS },
            Layer::Softmax,
        ]);
        ArchitectureDescriptor { input: vec![3, OBS, OBS], layers, taps }
    }
}

/// Probabilities over (UP, RIGHT, DOWN, LEFT, NOOP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionDistribution {
    pub probs: [f64; N_ACTIONS],
}

impl ActionDistribution {
    pub fn uniform() -> Self {
        Self { probs: [1.0 / N_ACTIONS as f64; N_ACTIONS] }
    }

    /// Softmax in `f64`.
    pub fn from_logits(logits: &[f32]) -> Self {
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
        let mut probs = [0.0; N_ACTIONS];
        for (p, &l) in probs.iter_mut().zip(logits) {
            *p = (l as f64 - max).exp();
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        Self { probs }
    }

    /// Index of the largest probability; ties go to the earliest action.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..N_ACTIONS {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Tap name → snapshot of the tensor there.
pub type ActivationCapture = BTreeMap<String, Tensor>;

/// Descriptor plus weights; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    descriptor: ArchitectureDescriptor,
    weights: BTreeMap<String, Tensor>,
    shapes: Vec<Vec<usize>>,
    kernels: BTreeMap<String, SparseKernel>,
}

impl PolicyNetwork {
    pub fn new(descriptor: ArchitectureDescriptor, weights: BTreeMap<String, Tensor>) -> Result<Self, NetError> {
        descriptor.validate()?;
        for (name, dims) in descriptor.param_shapes() {
            let t = weights.get(&name).ok_or_else(|| NetError::MissingTensor(name.clone()))?;
            if t.dims() != dims.as_slice() {
                return Err(NetError::ShapeMismatch { name, expected: dims, found: t.dims().to_vec() });
            }
            if !t.is_finite() {
                return Err(NetError::Shape(format!("tensor `{name}` has non-finite values")));
            }
        }
        let shapes = descriptor.shapes()?;
        let kernels = weights
            .iter()
            .filter(|(_, t)| t.dims().len() == 4)
            .map(|(name, t)| Ok((name.clone(), SparseKernel::new(t)?)))
            .collect::<Result<_, NetError>>()?;
        Ok(Self { descriptor, weights, shapes, kernels })
    }

    /// Every parameter zero: the policy is uniform.
    pub fn zeros(descriptor: ArchitectureDescriptor) -> Result<Self, NetError> {
        let weights = descriptor
            .param_shapes()
            .into_iter()
            .map(|(name, dims)| (name, Tensor::zeros(&dims)))
            .collect();
        Self::new(descriptor, weights)
    }

    pub fn descriptor(&self) -> &ArchitectureDescriptor {
        &self.descriptor
    }

    pub fn weights(&self) -> &BTreeMap<String, Tensor> {
        &self.weights
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.values().map(Tensor::len).sum()
    }

    pub fn tap_shape(&self, tap: &str) -> Result<&[usize], NetError> {
        let i = *self.descriptor.taps.get(tap).ok_or_else(|| NetError::UnknownTap(tap.to_string()))?;
        Ok(&self.shapes[i])
    }

    pub fn forward(
        &self,
        obs: &Observation,
        capture: &[&str],
    ) -> Result<(ActionDistribution, ActivationCapture), NetError> {
        self.forward_with_intervention(obs, &InterventionSpec::default(), capture)
    }

    pub fn forward_with_intervention(
        &self,
        obs: &Observation,
        spec: &InterventionSpec,
        capture: &[&str],
    ) -> Result<(ActionDistribution, ActivationCapture), NetError> {
        let input = Tensor::new(vec![3, OBS, OBS], obs.to_chw())?;
        self.forward_tensor(input, spec, capture)
    }

    /// Forward from an arbitrary channel-first input.
    pub fn forward_tensor(
        &self,
        input: Tensor,
        spec: &InterventionSpec,
        capture: &[&str],
    ) -> Result<(ActionDistribution, ActivationCapture), NetError> {
        if input.dims() != self.descriptor.input.as_slice() {
            return Err(NetError::Shape(format!("input {:?}, expected {:?}", input.dims(), self.descriptor.input)));
        }
        for name in capture {
            self.tap_shape(name)?;
        }
        spec.validate(self)?;

        let mut captured = ActivationCapture::new();
        let mut x = input;
        let last = self.descriptor.layers.len() - 1;
        for (i, layer) in self.descriptor.layers.iter().enumerate() {
            if i == last {
                break;
            }
            x = self.apply(layer, &format!("layers.{i}"), x)?;
            for (name, _) in self.descriptor.taps.iter().filter(|(_, &j)| j == i) {
                spec.apply_at(name, &mut x);
            }
            for (name, _) in self.descriptor.taps.iter().filter(|(_, &j)| j == i) {
                if capture.contains(&name.as_str()) {
                    captured.insert(name.clone(), x.clone());
                }
            }
        }
        Ok((ActionDistribution::from_logits(x.data()), captured))
    }

    fn param(&self, name: &str) -> &Tensor {
        // Presence is checked in `new`.
        &self.weights[name]
    }

    fn apply(&self, layer: &Layer, prefix: &str, x: Tensor) -> Result<Tensor, NetError> {
        let w = |suffix: &str| self.param(&format!("{prefix}.{suffix}"));
        Ok(match layer {
            Layer::Conv { stride, pad, .. } => {
                conv2d_sparse(&x, &self.kernels[&format!("{prefix}.weight")], Some(w("bias")), *stride, *pad)?
            }
            Layer::Relu => {
                let mut x = x;
                x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                x
            }
            Layer::MaxPool { k, stride, pad } => max_pool(&x, *k, *stride, *pad)?,
            Layer::Residual { body } => {
                let mut y = x.clone();
                for (j, l) in body.iter().enumerate() {
                    y = self.apply(l, &format!("{prefix}.body.{j}"), y)?;
                }
                let mut out = x;
                out.data_mut().iter_mut().zip(y.data()).for_each(|(a, b)| *a += b);
                out
            }
            Layer::Flatten => {
                let n = x.len();
                Tensor::new(vec![n], x.into_data())?
            }
            Layer::Dense { .. } => dense(&x, w("weight"), Some(w("bias")))?,
            Layer::Softmax => {
                let p = ActionDistribution::from_logits(x.data());
                Tensor::new(vec![N_ACTIONS], p.probs.iter().map(|&v| v as f32).collect())?
            }
            Layer::PixelShuffle { factor } => pixel_shuffle(&x, *factor)?,
            Layer::Resize { height, width } => resize_nearest(&x, *height, *width)?,
            Layer::PosBias { .. } => {
                let mut x = x;
                x.data_mut().iter_mut().zip(w("bias").data()).for_each(|(a, b)| *a += b);
                x
            }
        })
    }
}
