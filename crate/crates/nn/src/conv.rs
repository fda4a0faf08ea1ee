//! Direct 2-D cross-correlation (no kernel flip), depthwise variants, and
//! the depthwise-separable block used by backbone stages 2-5: depthwise 3x3
//! at the block stride, pointwise 1x1 remapping channels, then ReLU. There
//! is no activation between the two convolutions.
//!
//! Accumulation order is fixed (batch, out-channel, in-channel, kernel row,
//! kernel column, output row, output column), which keeps every forward and
//! backward pass bit-deterministic.

use rand_chacha::ChaCha8Rng;

use crate::tensor::{Precision, Tensor};
use crate::{shape_err, sum4, Result};

/// A convolution filter bank: weights laid out `[out, in, kh, kw]` plus one
/// bias per output channel. Depthwise kernels use `in = 1`.
#[derive(Debug, Clone)]
pub struct ConvKernel {
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

impl ConvKernel {
    pub fn new(weights: Tensor, bias: Vec<f32>) -> Result<Self> {
        let (o, _, _, _) = weights.rank4()?;
        if bias.len() != o {
            return shape_err(format!("bias len {} != out channels {}", bias.len(), o));
        }
        Ok(ConvKernel { weights, bias })
    }

    /// He-normal weights (std = sqrt(2 / fan_in)), zero bias.
    pub fn he_init(
        out_c: usize,
        in_c: usize,
        kh: usize,
        kw: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (in_c * kh * kw) as f32;
        let w = Tensor::randn(&[out_c, in_c, kh, kw], (2.0 / fan_in).sqrt(), rng);
        ConvKernel {
            weights: w,
            bias: vec![0.0; out_c],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }
}

fn out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let num = input as isize + 2 * pad as isize - k as isize;
    if num < 0 {
        return shape_err(format!(
            "kernel {k} larger than padded input {input}+2*{pad}"
        ));
    }
    Ok((num / stride as isize) as usize + 1)
}

/// Valid output index range `[lo, hi)` along one axis for a given kernel tap,
/// i.e. all `o` with `0 <= o*stride + tap - pad < extent`.
#[inline]
fn tap_range(out: usize, extent: usize, stride: usize, pad: usize, tap: usize) -> (usize, usize) {
    let s = stride as isize;
    let shift = tap as isize - pad as isize;
    let lo = (-shift + s - 1).div_euclid(s).max(0) as usize;
    let hi_num = extent as isize - 1 - shift;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = (hi_num.div_euclid(s) + 1).min(out as isize) as usize;
    (lo, hi.max(lo))
}

#[inline]
fn accumulate_tap(
    oplane: &mut [f32],
    iplane: &[f32],
    wv: f32,
    (oh, ow): (usize, usize),
    (h, w): (usize, usize),
    stride: usize,
    pad: usize,
    ky: usize,
    kx: usize,
) {
    let (oy_lo, oy_hi) = tap_range(oh, h, stride, pad, ky);
    let (ox_lo, ox_hi) = tap_range(ow, w, stride, pad, kx);
    if ox_hi <= ox_lo {
        return;
    }
    let xshift = kx as isize - pad as isize;
    for oy in oy_lo..oy_hi {
        let iy = (oy * stride) as isize + ky as isize - pad as isize;
        let irow = &iplane[iy as usize * w..][..w];
        let orow = &mut oplane[oy * ow..][..ow];
        if stride == 1 {
            let i0 = (ox_lo as isize + xshift) as usize;
            let len = ox_hi - ox_lo;
            let src = &irow[i0..i0 + len];
            let dst = &mut orow[ox_lo..ox_hi];
            for i in 0..len {
                dst[i] += wv * src[i];
            }
        } else {
            for ox in ox_lo..ox_hi {
                let ix = (ox * stride) as isize + xshift;
                orow[ox] += wv * irow[ix as usize];
            }
        }
    }
}

/// Scatter `wv * grad_out` back into the input-gradient plane; the adjoint of
/// `accumulate_tap` with identical index ranges.
#[inline]
fn scatter_tap(
    gin_plane: &mut [f32],
    gout_plane: &[f32],
    wv: f32,
    (oh, ow): (usize, usize),
    (h, w): (usize, usize),
    stride: usize,
    pad: usize,
    ky: usize,
    kx: usize,
) {
    let (oy_lo, oy_hi) = tap_range(oh, h, stride, pad, ky);
    let (ox_lo, ox_hi) = tap_range(ow, w, stride, pad, kx);
    if ox_hi <= ox_lo {
        return;
    }
    let xshift = kx as isize - pad as isize;
    for oy in oy_lo..oy_hi {
        let iy = (oy * stride) as isize + ky as isize - pad as isize;
        let grow = &gout_plane[oy * ow..][..ow];
        let irow = &mut gin_plane[iy as usize * w..][..w];
        if stride == 1 {
            let i0 = (ox_lo as isize + xshift) as usize;
            let len = ox_hi - ox_lo;
            let dst = &mut irow[i0..i0 + len];
            let src = &grow[ox_lo..ox_hi];
            for i in 0..len {
                dst[i] += wv * src[i];
            }
        } else {
            for ox in ox_lo..ox_hi {
                let ix = (ox * stride) as isize + xshift;
                irow[ix as usize] += wv * grow[ox];
            }
        }
    }
}

/// Correlate `grad_out` with the input to produce one weight-tap gradient.
#[inline]
fn tap_weight_grad(
    gout_plane: &[f32],
    iplane: &[f32],
    (oh, ow): (usize, usize),
    (h, w): (usize, usize),
    stride: usize,
    pad: usize,
    ky: usize,
    kx: usize,
) -> f32 {
    let (oy_lo, oy_hi) = tap_range(oh, h, stride, pad, ky);
    let (ox_lo, ox_hi) = tap_range(ow, w, stride, pad, kx);
    if ox_hi <= ox_lo {
        return 0.0;
    }
    let xshift = kx as isize - pad as isize;
    let mut acc = 0.0f32;
    for oy in oy_lo..oy_hi {
        let iy = (oy * stride) as isize + ky as isize - pad as isize;
        let irow = &iplane[iy as usize * w..][..w];
        let grow = &gout_plane[oy * ow..][..ow];
        if stride == 1 {
            let i0 = (ox_lo as isize + xshift) as usize;
            let len = ox_hi - ox_lo;
            acc += crate::dot4(&grow[ox_lo..ox_hi], &irow[i0..i0 + len]);
        } else {
            for ox in ox_lo..ox_hi {
                let ix = (ox * stride) as isize + xshift;
                acc += grow[ox] * irow[ix as usize];
            }
        }
    }
    acc
}

pub fn conv2d(input: &Tensor, kernel: &ConvKernel, stride: usize, pad: usize) -> Result<Tensor> {
    conv2d_raw(input, &kernel.weights, &kernel.bias, stride, pad)
}

/// Borrowed-parameter variant of [`conv2d`] for callers that keep weights in
/// a parameter store rather than owned kernels.
pub fn conv2d_raw(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f32],
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    if stride == 0 {
        return shape_err("stride must be >= 1");
    }
    let (n, cin, h, w) = input.rank4()?;
    let (cout, kin, kh, kw) = weights.rank4()?;
    if kin != cin {
        return shape_err(format!("input has {cin} channels, kernel expects {kin}"));
    }
    if bias.len() != cout {
        return shape_err(format!("bias len {} != out channels {cout}", bias.len()));
    }
    let oh = out_extent(h, kh, stride, pad)?;
    let ow = out_extent(w, kw, stride, pad)?;
    let precision = input.precision();

    let mut out = Tensor::zeros(&[n, cout, oh, ow]).with_precision(precision);
    let x = input.data();
    let wd = weights.data();
    let od = out.data_mut();
    for ni in 0..n {
        for oc in 0..cout {
            let oplane = &mut od[(ni * cout + oc) * oh * ow..][..oh * ow];
            oplane.fill(bias[oc]);
            for ic in 0..cin {
                let iplane = &x[(ni * cin + ic) * h * w..][..h * w];
                let kbase = (oc * cin + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[kbase + ky * kw + kx];
                        accumulate_tap(
                            oplane,
                            iplane,
                            wv,
                            (oh, ow),
                            (h, w),
                            stride,
                            pad,
                            ky,
                            kx,
                        );
                    }
                }
            }
            if precision == Precision::Fp16 {
                for v in oplane.iter_mut() {
                    *v = precision.quantize(*v);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub struct ConvGrads {
    pub d_input: Tensor,
    pub d_weights: Tensor,
    pub d_bias: Vec<f32>,
}

pub fn conv2d_backward(
    input: &Tensor,
    kernel: &ConvKernel,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    conv2d_backward_raw(input, &kernel.weights, stride, pad, grad_out)
}

pub fn conv2d_backward_raw(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    if input.precision() != Precision::Fp32 {
        return Err(crate::NnError::Precision(
            "backward passes require FP32 tensors".into(),
        ));
    }
    let (n, cin, h, w) = input.rank4()?;
    let (cout, kin, kh, kw) = weights.rank4()?;
    if kin != cin {
        return shape_err(format!("input has {cin} channels, kernel expects {kin}"));
    }
    let oh = out_extent(h, kh, stride, pad)?;
    let ow = out_extent(w, kw, stride, pad)?;
    let (gn, gc, gh, gw) = grad_out.rank4()?;
    if (gn, gc, gh, gw) != (n, cout, oh, ow) {
        return shape_err(format!(
            "grad_out dims {:?} do not match output [{n}, {cout}, {oh}, {ow}]",
            grad_out.dims()
        ));
    }

    let mut d_input = Tensor::zeros(&[n, cin, h, w]);
    let mut d_weights = Tensor::zeros(&[cout, cin, kh, kw]);
    let mut d_bias = vec![0.0f32; cout];
    let x = input.data();
    let wd = weights.data();
    let g = grad_out.data();
    let di = d_input.data_mut();
    let dw = d_weights.data_mut();

    for ni in 0..n {
        for oc in 0..cout {
            let gplane = &g[(ni * cout + oc) * oh * ow..][..oh * ow];
            d_bias[oc] += sum4(gplane);
            for ic in 0..cin {
                let iplane = &x[(ni * cin + ic) * h * w..][..h * w];
                let gin = &mut di[(ni * cin + ic) * h * w..][..h * w];
                let kbase = (oc * cin + ic) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wd[kbase + ky * kw + kx];
                        scatter_tap(gin, gplane, wv, (oh, ow), (h, w), stride, pad, ky, kx);
                        dw[kbase + ky * kw + kx] +=
                            tap_weight_grad(gplane, iplane, (oh, ow), (h, w), stride, pad, ky, kx);
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        d_input,
        d_weights,
        d_bias,
    })
}

/// Depthwise convolution: `kernel.weights` is `[C, 1, kh, kw]`, one filter
/// per input channel, output channel count equals input channel count.
pub fn depthwise_conv2d(
    input: &Tensor,
    kernel: &ConvKernel,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    depthwise_conv2d_raw(input, &kernel.weights, &kernel.bias, stride, pad)
}

pub fn depthwise_conv2d_raw(
    input: &Tensor,
    weights: &Tensor,
    bias: &[f32],
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    if stride == 0 {
        return shape_err("stride must be >= 1");
    }
    let (n, c, h, w) = input.rank4()?;
    let (kc, k1, kh, kw) = weights.rank4()?;
    if kc != c || k1 != 1 {
        return shape_err(format!(
            "depthwise kernel [{kc}, {k1}, ..] does not match {c} input channels"
        ));
    }
    let oh = out_extent(h, kh, stride, pad)?;
    let ow = out_extent(w, kw, stride, pad)?;
    let precision = input.precision();

    if bias.len() != c {
        return shape_err(format!("bias len {} != channels {c}", bias.len()));
    }
    let mut out = Tensor::zeros(&[n, c, oh, ow]).with_precision(precision);
    let x = input.data();
    let wd = weights.data();
    let od = out.data_mut();
    for ni in 0..n {
        for ch in 0..c {
            let oplane = &mut od[(ni * c + ch) * oh * ow..][..oh * ow];
            oplane.fill(bias[ch]);
            let iplane = &x[(ni * c + ch) * h * w..][..h * w];
            let kbase = ch * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wd[kbase + ky * kw + kx];
                    accumulate_tap(oplane, iplane, wv, (oh, ow), (h, w), stride, pad, ky, kx);
                }
            }
            if precision == Precision::Fp16 {
                for v in oplane.iter_mut() {
                    *v = precision.quantize(*v);
                }
            }
        }
    }
    Ok(out)
}

pub fn depthwise_conv2d_backward(
    input: &Tensor,
    kernel: &ConvKernel,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    depthwise_conv2d_backward_raw(input, &kernel.weights, stride, pad, grad_out)
}

pub fn depthwise_conv2d_backward_raw(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    if input.precision() != Precision::Fp32 {
        return Err(crate::NnError::Precision(
            "backward passes require FP32 tensors".into(),
        ));
    }
    let (n, c, h, w) = input.rank4()?;
    let (kc, _, kh, kw) = weights.rank4()?;
    if kc != c {
        return shape_err("depthwise kernel channel mismatch".to_string());
    }
    let oh = out_extent(h, kh, stride, pad)?;
    let ow = out_extent(w, kw, stride, pad)?;
    if grad_out.dims() != [n, c, oh, ow] {
        return shape_err(format!(
            "grad_out dims {:?} do not match output [{n}, {c}, {oh}, {ow}]",
            grad_out.dims()
        ));
    }

    let mut d_input = Tensor::zeros(&[n, c, h, w]);
    let mut d_weights = Tensor::zeros(&[c, 1, kh, kw]);
    let mut d_bias = vec![0.0f32; c];
    let x = input.data();
    let wd = weights.data();
    let g = grad_out.data();
    let di = d_input.data_mut();
    let dw = d_weights.data_mut();

    for ni in 0..n {
        for ch in 0..c {
            let gplane = &g[(ni * c + ch) * oh * ow..][..oh * ow];
            d_bias[ch] += sum4(gplane);
            let iplane = &x[(ni * c + ch) * h * w..][..h * w];
            let gin = &mut di[(ni * c + ch) * h * w..][..h * w];
            let kbase = ch * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wd[kbase + ky * kw + kx];
                    scatter_tap(gin, gplane, wv, (oh, ow), (h, w), stride, pad, ky, kx);
                    dw[kbase + ky * kw + kx] +=
                        tap_weight_grad(gplane, iplane, (oh, ow), (h, w), stride, pad, ky, kx);
                }
            }
        }
    }
    Ok(ConvGrads {
        d_input,
        d_weights,
        d_bias,
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// ReLU gradient gated on the forward *output*: positive output passes the
/// gradient, zero output blocks it.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(output.dims(), grad_out.dims());
    let mut g = grad_out.clone();
    for (gv, ov) in g.data_mut().iter_mut().zip(output.data().iter()) {
        if *ov <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Depthwise 3x3 at `stride` (pad 1), pointwise 1x1, ReLU.
pub fn dws_block(
    input: &Tensor,
    depthwise: &ConvKernel,
    pointwise: &ConvKernel,
    stride: usize,
) -> Result<Tensor> {
    let (out, _) = dws_block_train(input, depthwise, pointwise, stride)?;
    Ok(out)
}

/// Like [`dws_block`] but also returns the depthwise output, which the
/// backward pass needs for the pointwise weight gradient.
pub fn dws_block_train(
    input: &Tensor,
    depthwise: &ConvKernel,
    pointwise: &ConvKernel,
    stride: usize,
) -> Result<(Tensor, Tensor)> {
    dws_block_train_raw(
        input,
        &depthwise.weights,
        &depthwise.bias,
        &pointwise.weights,
        &pointwise.bias,
        stride,
    )
}

pub fn dws_block_train_raw(
    input: &Tensor,
    dw_weights: &Tensor,
    dw_bias: &[f32],
    pw_weights: &Tensor,
    pw_bias: &[f32],
    stride: usize,
) -> Result<(Tensor, Tensor)> {
    let kh = dw_weights.dims()[2];
    let mid = depthwise_conv2d_raw(input, dw_weights, dw_bias, stride, kh / 2)?;
    let pre = conv2d_raw(&mid, pw_weights, pw_bias, 1, 0)?;
    Ok((relu(&pre), mid))
}

#[derive(Debug)]
pub struct DwsGrads {
    pub d_input: Tensor,
    pub d_dw_weights: Tensor,
    pub d_dw_bias: Vec<f32>,
    pub d_pw_weights: Tensor,
    pub d_pw_bias: Vec<f32>,
}

pub fn dws_block_backward(
    input: &Tensor,
    depthwise: &ConvKernel,
    pointwise: &ConvKernel,
    stride: usize,
    mid: &Tensor,
    output: &Tensor,
    grad_out: &Tensor,
) -> Result<DwsGrads> {
    dws_block_backward_raw(
        input,
        &depthwise.weights,
        &pointwise.weights,
        stride,
        mid,
        output,
        grad_out,
    )
}

pub fn dws_block_backward_raw(
    input: &Tensor,
    dw_weights: &Tensor,
    pw_weights: &Tensor,
    stride: usize,
    mid: &Tensor,
    output: &Tensor,
    grad_out: &Tensor,
) -> Result<DwsGrads> {
    let d_pre = relu_backward(output, grad_out);
    let d_pw = conv2d_backward_raw(mid, pw_weights, 1, 0, &d_pre)?;
    let kh = dw_weights.dims()[2];
    let d_dw = depthwise_conv2d_backward_raw(input, dw_weights, stride, kh / 2, &d_pw.d_input)?;
    Ok(DwsGrads {
        d_input: d_dw.d_input,
        d_dw_weights: d_dw.d_weights,
        d_dw_bias: d_dw.d_bias,
        d_pw_weights: d_pw.d_weights,
        d_pw_bias: d_pw.d_bias,
    })
}
