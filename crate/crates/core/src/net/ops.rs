// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layer primitives.

use super::{NetError, Tensor};

fn chw(t: &Tensor, what: &str) -> Result<(usize, usize, usize), NetError> {
    match *t.dims() {
        [c, h, w] => Ok((c, h, w)),
        ref d => Err(NetError::Shape(format!("{what} expects C×H×W, got {d:?}"))),
    }
}

/// Output positions `o` in `0..out_len` whose input index `o·stride + k - pad`
/// falls inside `0..in_len`.
fn valid_outputs(k: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> std::ops::Range<usize> {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    if in_len + pad <= k {
        return 0..0;
    }
    let hi = ((in_len - 1 + pad - k) / stride + 1).min(out_len);
    lo.min(hi)..hi
}

/// Non-zero taps of a `[O,C,k,k]` kernel in `(o, c, ky, kx)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseKernel {
    dims: [usize; 4],
    taps: Vec<(usize, usize, usize, usize, f64)>,
}

impl SparseKernel {
    pub fn new(kernel: &Tensor) -> Result<Self, NetError> {
        let dims = match *kernel.dims() {
            [o, c, kh, kw] if kh == kw => [o, c, kh, kw],
            ref d => return Err(NetError::Shape(format!("kernel must be O×C×k×k, got {d:?}"))),
        };
        let [_, c, k, _] = dims;
        let taps = kernel
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (i / (c * k * k), i / (k * k) % c, i / k % k, i % k, w as f64))
            .collect();
        Ok(Self { dims, taps })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn nonzeros(&self) -> usize {
        self.taps.len()
    }
}

/// Cross-correlation of `input [C,H,W]` with `kernel [O,C,k,k]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor, NetError> {
    conv2d_sparse(input, &SparseKernel::new(kernel)?, bias, stride, pad)
}

/// [`conv2d`] over a pre-extracted kernel. Zero taps cost nothing, which is
/// what makes the analytically wired networks (mostly zeros) cheap. Each
/// output sums bias, then taps in kernel order, in `f64`.
pub fn conv2d_sparse(
    input: &Tensor,
    kernel: &SparseKernel,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor, NetError> {
    let (c_in, h, w) = chw(input, "conv2d")?;
    let [o_ch, kc, kh, kw] = kernel.dims;
    if kc != c_in || stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(NetError::Shape(format!(
            "conv2d kernel {:?} (stride {stride}, pad {pad}) incompatible with input {:?}",
            kernel.dims,
            input.dims()
        )));
    }
    if let Some(b) = bias {
        if b.dims() != [o_ch] {
            return Err(NetError::Shape(format!("bias {:?} for {o_ch} output channels", b.dims())));
        }
    }
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let src = input.data();
    let mut acc = vec![0.0f64; o_ch * ho * wo];
    if let Some(b) = bias {
        for (o, plane) in acc.chunks_mut(ho * wo).enumerate() {
            plane.fill(b.data()[o] as f64);
        }
    }
    for &(o, c, ky, kx, wv) in &kernel.taps {
        let plane = &src[c * h * w..(c + 1) * h * w];
        let rows = valid_outputs(ky, pad, stride, h, ho);
        let cols = valid_outputs(kx, pad, stride, w, wo);
        for oy in rows {
            let iy = oy * stride + ky - pad;
            let in_row = &plane[iy * w..(iy + 1) * w];
            let acc_row = &mut acc[(o * ho + oy) * wo..(o * ho + oy + 1) * wo];
            for ox in cols.clone() {
                acc_row[ox] += wv * in_row[ox * stride + kx - pad] as f64;
            }
        }
    }
    Tensor::new(vec![o_ch, ho, wo], acc.into_iter().map(|a| a as f32).collect())
}

/// Max pooling; padded positions never win.
pub fn max_pool(input: &Tensor, k: usize, stride: usize, pad: usize) -> Result<Tensor, NetError> {
    let (c, h, w) = chw(input, "max_pool")?;
    if stride == 0 || pad >= k || h + 2 * pad < k || w + 2 * pad < k {
        return Err(NetError::Shape(format!("max_pool k={k} s={stride} p={pad} on {:?}", input.dims())));
    }
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let src = input.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        m = m.max(src[(ch * h + iy as usize) * w + ix as usize]);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out)
}

/// `weight [out, in] · x + bias`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor, NetError> {
    let (n_out, n_in) = match *weight.dims() {
        [o, i] => (o, i),
        ref d => return Err(NetError::Shape(format!("dense weight must be rank 2, got {d:?}"))),
    };
    if x.dims() != [n_in] {
        return Err(NetError::Shape(format!("dense expects [{n_in}], got {:?}", x.dims())));
    }
    let wd = weight.data();
    let out = (0..n_out)
        .map(|j| {
            let row = &wd[j * n_in..(j + 1) * n_in];
            let dot: f64 = row
                .iter()
                .zip(x.data())
                .filter(|(_, &v)| v != 0.0)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            (dot + bias.map_or(0.0, |b| b.data()[j] as f64)) as f32
        })
        .collect();
    Tensor::new(vec![n_out], out)
}

/// Depth-to-space: `out[c, y·r+i, x·r+j] = in[c·r² + i·r + j, y, x]`.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor, NetError> {
    let (c, h, w) = chw(input, "pixel_shuffle")?;
    if r == 0 || c % (r * r) != 0 {
        return Err(NetError::Shape(format!("pixel_shuffle({r}) on {c} channels")));
    }
    let co = c / (r * r);
    let (ho, wo) = (h * r, w * r);
    let mut out = vec![0.0f32; co * ho * wo];
    for oc in 0..co {
        for i in 0..r {
            for j in 0..r {
                let plane = input.channel(oc * r * r + i * r + j);
                for y in 0..h {
                    for x in 0..w {
                        out[(oc * ho + y * r + i) * wo + x * r + j] = plane[y * w + x];
                    }
                }
            }
        }
    }
    Tensor::new(vec![co, ho, wo], out)
}

/// Source index of nearest-neighbor resampling with half-pixel centers.
pub fn resize_source(dst: usize, in_len: usize, out_len: usize) -> usize {
    (((2 * dst + 1) * in_len) / (2 * out_len)).min(in_len - 1)
}

pub fn resize_nearest(input: &Tensor, height: usize, width: usize) -> Result<Tensor, NetError> {
    let (c, h, w) = chw(input, "resize")?;
    let ys: Vec<usize> = (0..height).map(|y| resize_source(y, h, height)).collect();
    let xs: Vec<usize> = (0..width).map(|x| resize_source(x, w, width)).collect();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let plane = input.channel(ch);
        for &y in &ys {
            out.extend(xs.iter().map(|&x| plane[y * w + x]));
        }
    }
    Tensor::new(vec![c, height, width], out)
}
