//! Layer primitives.
//!
//! Every op here is a pure function of its inputs. Parallel loops only
//! split work across independent output channels, so results are bitwise
//! identical for any thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) fn out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    ceil: bool,
) -> Option<usize> {
    let span = (input + 2 * padding).checked_sub(kernel)?;
    let mut out = if ceil {
        span.div_ceil(stride) + 1
    } else {
        span / stride + 1
    };
    // A ceil-mode window must start inside the input or left padding.
    if ceil && (out - 1) * stride >= input + padding {
        out -= 1;
    }
    Some(out)
}

/// Direct 2-D cross-correlation with zero padding.
///
/// `weight` is `[out, in, kh, kw]`. Each output value is accumulated over
/// input channels, then kernel rows, then kernel columns, and the bias is
/// added last.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (c_in, h, w) = input.chw("conv2d")?;
    let [c_out, w_in, kh, kw] = weight.shape()[..] else {
        return Err(Error::shape(
            "conv2d",
            format!("weight must be [out, in, kh, kw], got {:?}", weight.shape()),
        ));
    };
    if w_in != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c_in} channels but weight expects {w_in}"),
        ));
    }
    if stride == 0 {
        return Err(Error::shape("conv2d", "stride must be at least 1"));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "bias shape {:?} does not match {c_out} output channels",
                    b.shape()
                ),
            ));
        }
    }
    let (Some(oh), Some(ow)) = (
        out_dim(h, kh, stride, padding, false),
        out_dim(w, kw, stride, padding, false),
    ) else {
        return Err(Error::shape(
            "conv2d",
            format!(
                "kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            ),
        ));
    };

    let x = input.data();
    let wt = weight.data();
    let plane = oh * ow;
    let mut out = vec![0.0f32; c_out * plane];

    out.par_chunks_mut(plane).enumerate().for_each(|(oc, acc)| {
        for c in 0..c_in {
            let src = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wt[((oc * c_in + c) * kh + ky) * kw + kx];
                    // Output columns whose input column lands inside the image.
                    let ox_lo = padding.saturating_sub(kx).div_ceil(stride);
                    let ox_hi = ((w + padding).saturating_sub(kx)).div_ceil(stride).min(ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy * stride + ky;
                        if iy < padding || iy - padding >= h {
                            continue;
                        }
                        let row = &src[(iy - padding) * w..(iy - padding + 1) * w];
                        let dst = &mut acc[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let base = ox_lo + kx - padding;
                            let n = ox_hi - ox_lo;
                            for (d, s) in dst[ox_lo..ox_hi].iter_mut().zip(&row[base..base + n]) {
                                *d += wv * s;
                            }
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate().take(ox_hi).skip(ox_lo) {
                                *d += wv * row[ox * stride + kx - padding];
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = bias {
            let bv = b.data()[oc];
            acc.iter_mut().for_each(|v| *v += bv);
        }
    });

    Tensor::new(vec![c_out, oh, ow], out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_inplace(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Max-pooling window geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub ceil_mode: bool,
}

impl PoolSpec {
    pub const fn new(kernel: usize, stride: usize) -> Self {
        PoolSpec {
            kernel,
            stride,
            padding: 0,
            ceil_mode: false,
        }
    }

    pub(crate) fn out_dim(&self, input: usize) -> Option<usize> {
        out_dim(
            input,
            self.kernel,
            self.stride,
            self.padding,
            self.ceil_mode,
        )
    }
}

/// Windowed maximum with floor output sizing and no padding.
pub fn maxpool2d(input: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    maxpool2d_with(input, PoolSpec::new(kernel, stride))
}

/// Windowed maximum. Padded positions never win (they act as `-inf`).
pub fn maxpool2d_with(input: &Tensor, spec: PoolSpec) -> Result<Tensor> {
    let (c, h, w) = input.chw("maxpool2d")?;
    let PoolSpec {
        kernel,
        stride,
        padding,
        ceil_mode,
    } = spec;
    if kernel == 0 || stride == 0 {
        return Err(Error::shape(
            "maxpool2d",
            "kernel and stride must be at least 1",
        ));
    }
    let (Some(oh), Some(ow)) = (
        out_dim(h, kernel, stride, padding, ceil_mode),
        out_dim(w, kernel, stride, padding, ceil_mode),
    ) else {
        return Err(Error::shape(
            "maxpool2d",
            format!("kernel {kernel} larger than input {h}x{w} (padding {padding})"),
        ));
    };
    let x = input.data();
    let mut out = vec![0.0f32; c * oh * ow];
    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(ch, dst)| {
            let src = &x[ch * h * w..(ch + 1) * h * w];
            for oy in 0..oh {
                let y0 = (oy * stride).saturating_sub(padding);
                let y1 = (oy * stride + kernel).saturating_sub(padding).min(h);
                for ox in 0..ow {
                    let x0 = (ox * stride).saturating_sub(padding);
                    let x1 = (ox * stride + kernel).saturating_sub(padding).min(w);
                    let mut m = f32::NEG_INFINITY;
                    for iy in y0..y1 {
                        for v in &src[iy * w + x0..iy * w + x1] {
                            m = m.max(*v);
                        }
                    }
                    dst[oy * ow + ox] = m;
                }
            }
        });
    Tensor::new(vec![c, oh, ow], out)
}

/// Adaptive average pooling to a fixed `out_h x out_w` grid.
///
/// Bin `i` covers rows `floor(i*H/out_h) .. ceil((i+1)*H/out_h)`.
pub fn adaptive_avg_pool2d(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw("adaptive_avg_pool2d")?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::shape(
            "adaptive_avg_pool2d",
            "empty input or output grid",
        ));
    }
    let x = input.data();
    let mut out = vec![0.0f32; c * out_h * out_w];
    out.par_chunks_mut(out_h * out_w)
        .enumerate()
        .for_each(|(ch, dst)| {
            let src = &x[ch * h * w..(ch + 1) * h * w];
            for oy in 0..out_h {
                let y0 = oy * h / out_h;
                let y1 = ((oy + 1) * h).div_ceil(out_h);
                for ox in 0..out_w {
                    let x0 = ox * w / out_w;
                    let x1 = ((ox + 1) * w).div_ceil(out_w);
                    let mut s = 0.0f32;
                    for iy in y0..y1 {
                        for v in &src[iy * w + x0..iy * w + x1] {
                            s += v;
                        }
                    }
                    dst[oy * out_w + ox] = s / ((y1 - y0) * (x1 - x0)) as f32;
                }
            }
        });
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Inference-mode batch normalization with running statistics.
pub fn batch_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f32,
) -> Result<Tensor> {
    let (c, h, w) = input.chw("batch_norm")?;
    for (name, t) in [
        ("weight", gamma),
        ("bias", beta),
        ("running_mean", mean),
        ("running_var", var),
    ] {
        if t.shape() != [c] {
            return Err(Error::shape(
                "batch_norm",
                format!("{name} shape {:?} does not match {c} channels", t.shape()),
            ));
        }
    }
    let mut out = input.clone();
    out.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(ch, plane)| {
            let scale = gamma.data()[ch] / (var.data()[ch] + eps).sqrt();
            let shift = beta.data()[ch] - mean.data()[ch] * scale;
            plane.iter_mut().for_each(|v| *v = *v * scale + shift);
        });
    Ok(out)
}

/// `weight` is `[out, in]`; `input` is flattened first.
pub fn linear(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let [n_out, n_in] = weight.shape()[..] else {
        return Err(Error::shape(
            "linear",
            format!("weight must be [out, in], got {:?}", weight.shape()),
        ));
    };
    if input.len() != n_in {
        return Err(Error::shape(
            "linear",
            format!(
                "input has {} features but weight expects {n_in}",
                input.len()
            ),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [n_out] {
            return Err(Error::shape(
                "linear",
                format!("bias shape {:?} != [{n_out}]", b.shape()),
            ));
        }
    }
    let x = input.data();
    let wt = weight.data();
    let out: Vec<f32> = (0..n_out)
        .into_par_iter()
        .map(|o| {
            let row = &wt[o * n_in..(o + 1) * n_in];
            let s = row.iter().zip(x).fold(0.0f32, |acc, (a, b)| acc + a * b);
            s + bias.map_or(0.0, |b| b.data()[o])
        })
        .collect();
    Tensor::new(vec![n_out], out)
}

/// Concatenate rank-3 tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(Error::shape("concat", "nothing to concatenate"));
    };
    let (_, h, w) = first.chw("concat")?;
    let mut channels = 0;
    let mut data = Vec::new();
    for p in parts {
        let (c, ph, pw) = p.chw("concat")?;
        if (ph, pw) != (h, w) {
            return Err(Error::shape(
                "concat",
                format!("spatial dims {ph}x{pw} != {h}x{w}"),
            ));
        }
        channels += c;
        data.extend_from_slice(p.data());
    }
    Tensor::new(vec![channels, h, w], data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "add",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Weights of one SqueezeNet fire module.
#[derive(Clone, Copy, Debug)]
pub struct FireParams<'a> {
    pub squeeze_weight: &'a Tensor,
    pub squeeze_bias: Option<&'a Tensor>,
    pub expand1x1_weight: &'a Tensor,
    pub expand1x1_bias: Option<&'a Tensor>,
    pub expand3x3_weight: &'a Tensor,
    pub expand3x3_bias: Option<&'a Tensor>,
}

/// `concat(relu(expand1x1(s)), relu(expand3x3(s)))` with `s = relu(squeeze(x))`.
pub fn fire_forward(input: &Tensor, p: &FireParams<'_>) -> Result<Tensor> {
    let mut s = conv2d(input, p.squeeze_weight, p.squeeze_bias, 1, 0)?;
    relu_inplace(&mut s);
    let mut e1 = conv2d(&s, p.expand1x1_weight, p.expand1x1_bias, 1, 0)?;
    relu_inplace(&mut e1);
    let mut e3 = conv2d(&s, p.expand3x3_weight, p.expand3x3_bias, 1, 1)?;
    relu_inplace(&mut e3);
    concat_channels(&[&e1, &e3])
}
