//! Layer descriptors over the flat parameter map.
//!
//! Model structure lives in lightweight descriptors; the weights themselves
//! sit in a `BTreeMap<String, Tensor>` keyed `"<layer>.w"` / `"<layer>.b"`
//! (depthwise-separable blocks use `"<layer>.dw.*"` / `"<layer>.pw.*"`).
//! The map form is what the optimizer and the checkpoint codec consume.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use skyhook_nn::{
    conv2d_backward_raw, conv2d_raw, dws_block_backward_raw, dws_block_train_raw, linear,
    linear_backward, relu, relu_backward, Tensor,
};

use crate::{PerceptionError, Result};

pub type ParamMap = BTreeMap<String, Tensor>;

/// Borrow helper: fetch weights/bias by layer name.
pub struct P<'a>(pub &'a ParamMap);

impl<'a> P<'a> {
    pub fn t(&self, key: &str) -> &'a Tensor {
        self.0
            .get(key)
            .unwrap_or_else(|| panic!("missing parameter {key}"))
    }

    pub fn b(&self, key: &str) -> &'a [f32] {
        self.t(key).data()
    }
}

/// Gradient accumulator mirroring the parameter map.
#[derive(Debug, Default)]
pub struct GradMap {
    pub map: BTreeMap<String, Tensor>,
}

impl GradMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: &str, t: Tensor) {
        match self.map.get_mut(key) {
            Some(acc) => acc.add_assign(&t).expect("gradient shape drift"),
            None => {
                self.map.insert(key.to_string(), t);
            }
        }
    }

    pub fn add_bias(&mut self, key: &str, v: Vec<f32>) {
        let n = v.len();
        self.add(key, Tensor::new(&[n], v).expect("bias grad"));
    }

    pub fn scale(&mut self, s: f32) {
        for t in self.map.values_mut() {
            t.scale_in_place(s);
        }
    }
}

fn he_weights(dims: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(dims, (2.0 / fan_in as f64).sqrt() as f32, rng)
}

/// Plain convolution layer (+ optional ReLU applied by callers).
#[derive(Debug, Clone)]
pub struct ConvDesc {
    pub name: String,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvDesc {
    pub fn new(name: impl Into<String>, in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvDesc {
            name: name.into(),
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        let fan_in = self.in_c * self.k * self.k;
        params.insert(
            format!("{}.w", self.name),
            he_weights(&[self.out_c, self.in_c, self.k, self.k], fan_in, rng),
        );
        params.insert(format!("{}.b", self.name), Tensor::zeros(&[self.out_c]));
    }

    pub fn fwd(&self, p: &P, x: &Tensor) -> Result<Tensor> {
        let w = p.t(&format!("{}.w", self.name));
        let b = p.b(&format!("{}.b", self.name));
        Ok(conv2d_raw(x, w, b, self.stride, self.pad)?)
    }

    /// Backward; returns d_input and accumulates parameter grads.
    pub fn bwd(&self, p: &P, x: &Tensor, grad_out: &Tensor, grads: &mut GradMap) -> Result<Tensor> {
        let w = p.t(&format!("{}.w", self.name));
        let g = conv2d_backward_raw(x, w, self.stride, self.pad, grad_out)?;
        grads.add(&format!("{}.w", self.name), g.d_weights);
        grads.add_bias(&format!("{}.b", self.name), g.d_bias);
        Ok(g.d_input)
    }

    pub fn param_count(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k + self.out_c
    }

    pub fn macs(&self, oh: usize, ow: usize) -> u64 {
        (self.out_c * self.in_c * self.k * self.k * oh * ow) as u64
    }
}

/// Depthwise-separable block: depthwise 3x3 -> pointwise 1x1 -> ReLU.
#[derive(Debug, Clone)]
pub struct DwsDesc {
    pub name: String,
    pub in_c: usize,
    pub out_c: usize,
    pub stride: usize,
}

impl DwsDesc {
    pub fn new(name: impl Into<String>, in_c: usize, out_c: usize, stride: usize) -> Self {
        DwsDesc {
            name: name.into(),
            in_c,
            out_c,
            stride,
        }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        params.insert(
            format!("{}.dw.w", self.name),
            he_weights(&[self.in_c, 1, 3, 3], 9, rng),
        );
        params.insert(format!("{}.dw.b", self.name), Tensor::zeros(&[self.in_c]));
        params.insert(
            format!("{}.pw.w", self.name),
            he_weights(&[self.out_c, self.in_c, 1, 1], self.in_c, rng),
        );
        params.insert(format!("{}.pw.b", self.name), Tensor::zeros(&[self.out_c]));
    }

    /// Returns (output, depthwise mid) so backward can reuse the mid tensor.
    pub fn fwd_train(&self, p: &P, x: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok(dws_block_train_raw(
            x,
            p.t(&format!("{}.dw.w", self.name)),
            p.b(&format!("{}.dw.b", self.name)),
            p.t(&format!("{}.pw.w", self.name)),
            p.b(&format!("{}.pw.b", self.name)),
            self.stride,
        )?)
    }

    pub fn fwd(&self, p: &P, x: &Tensor) -> Result<Tensor> {
        Ok(self.fwd_train(p, x)?.0)
    }

    pub fn bwd(
        &self,
        p: &P,
        x: &Tensor,
        mid: &Tensor,
        out: &Tensor,
        grad_out: &Tensor,
        grads: &mut GradMap,
    ) -> Result<Tensor> {
        let g = dws_block_backward_raw(
            x,
            p.t(&format!("{}.dw.w", self.name)),
            p.t(&format!("{}.pw.w", self.name)),
            self.stride,
            mid,
            out,
            grad_out,
        )?;
        grads.add(&format!("{}.dw.w", self.name), g.d_dw_weights);
        grads.add_bias(&format!("{}.dw.b", self.name), g.d_dw_bias);
        grads.add(&format!("{}.pw.w", self.name), g.d_pw_weights);
        grads.add_bias(&format!("{}.pw.b", self.name), g.d_pw_bias);
        Ok(g.d_input)
    }

    pub fn param_count(&self) -> usize {
        self.in_c * 9 + self.in_c + self.out_c * self.in_c + self.out_c
    }

    pub fn macs(&self, oh: usize, ow: usize) -> u64 {
        ((self.in_c * 9 + self.out_c * self.in_c) * oh * ow) as u64
    }
}

/// Fully connected layer.
#[derive(Debug, Clone)]
pub struct LinearDesc {
    pub name: String,
    pub in_f: usize,
    pub out_f: usize,
}

impl LinearDesc {
    pub fn new(name: impl Into<String>, in_f: usize, out_f: usize) -> Self {
        LinearDesc {
            name: name.into(),
            in_f,
            out_f,
        }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        params.insert(
            format!("{}.w", self.name),
            he_weights(&[self.out_f, self.in_f], self.in_f, rng),
        );
        params.insert(format!("{}.b", self.name), Tensor::zeros(&[self.out_f]));
    }

    pub fn fwd(&self, p: &P, x: &Tensor) -> Result<Tensor> {
        Ok(linear(
            x,
            p.t(&format!("{}.w", self.name)),
            p.b(&format!("{}.b", self.name)),
        )?)
    }

    pub fn bwd(&self, p: &P, x: &Tensor, grad_out: &Tensor, grads: &mut GradMap) -> Result<Tensor> {
        let g = linear_backward(x, p.t(&format!("{}.w", self.name)), grad_out)?;
        grads.add(&format!("{}.w", self.name), g.d_weights);
        grads.add_bias(&format!("{}.b", self.name), g.d_bias);
        Ok(g.d_input)
    }

    pub fn param_count(&self) -> usize {
        self.out_f * self.in_f + self.out_f
    }

    pub fn macs(&self) -> u64 {
        (self.out_f * self.in_f) as u64
    }
}

pub use skyhook_nn::{relu as relu_fwd, relu_backward as relu_bwd};

/// Concatenate `[1, Ci, H, W]` tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let (_, _, h, w) = parts[0].rank4().map_err(PerceptionError::from)?;
    let mut total_c = 0;
    for t in parts {
        let (n, c, th, tw) = t.rank4()?;
        if n != 1 || th != h || tw != w {
            return Err(PerceptionError::Shape(format!(
                "concat expects [1,C,{h},{w}], got {:?}",
                t.dims()
            )));
        }
        total_c += c;
    }
    let mut out = Tensor::zeros(&[1, total_c, h, w]).with_precision(parts[0].precision());
    let mut off = 0usize;
    {
        let od = out.data_mut();
        for t in parts {
            let d = t.data();
            od[off..off + d.len()].copy_from_slice(d);
            off += d.len();
        }
    }
    Ok(out)
}

/// Split a gradient w.r.t. a channel concat back into per-part gradients.
pub fn split_channel_grad(grad: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let (_, c, h, w) = grad.rank4()?;
    if channels.iter().sum::<usize>() != c {
        return Err(PerceptionError::Shape(format!(
            "split channels {channels:?} != total {c}"
        )));
    }
    let d = grad.data();
    let plane = h * w;
    let mut out = Vec::with_capacity(channels.len());
    let mut off = 0usize;
    for &ci in channels {
        let len = ci * plane;
        let part = Tensor::new(&[1, ci, h, w], d[off..off + len].to_vec())?;
        out.push(part);
        off += len;
    }
    Ok(out)
}

/// Global average pool `[n, c, h, w] -> [n, c]`.
pub fn global_avg_pool(t: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = t.rank4()?;
    let plane = h * w;
    let prec = t.precision();
    let d = t.data();
    let mut out = vec![0.0f32; n * c];
    for i in 0..n * c {
        let s: f32 = skyhook_nn_sum(&d[i * plane..][..plane]);
        out[i] = prec.quantize(s / plane as f32);
    }
    Ok(Tensor::new(&[n, c], out)?.with_precision(prec))
}

fn skyhook_nn_sum(v: &[f32]) -> f32 {
    // Sequential sum; pools here are tiny (<= 4x4).
    v.iter().sum()
}

/// Adjoint of [`global_avg_pool`].
pub fn global_avg_pool_backward(dims: &[usize], g: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = (dims[0], dims[1], dims[2], dims[3]);
    let plane = h * w;
    let gd = g.data();
    let mut out = Tensor::zeros(dims);
    {
        let od = out.data_mut();
        for i in 0..n * c {
            let per = gd[i] / plane as f32;
            od[i * plane..][..plane].fill(per);
        }
    }
    Ok(out)
}

/// Elementwise sigmoid preserving the tensor's precision grid.
pub fn apply_sigmoid(t: &Tensor) -> Tensor {
    let prec = t.precision();
    let data: Vec<f32> = t
        .data()
        .iter()
        .map(|&v| prec.quantize(skyhook_nn::sigmoid(v)))
        .collect();
    Tensor::new(t.dims(), data)
        .expect("sigmoid shape")
        .with_precision(prec)
}

/// ReLU by descriptor-free call, re-exported for symmetry in forward code.
pub fn relu_t(t: &Tensor) -> Tensor {
    relu(t)
}

pub fn relu_grad(out: &Tensor, g: &Tensor) -> Tensor {
    relu_backward(out, g)
}

#[allow(unused_imports)]
use skyhook_nn::NnError;
