//! Gradient verification. Analytic FP32 gradients are compared against
//! central finite differences of an independent f64 reference forward pass
//! (plain definitional loops, sharing no code with the production kernels).
//! Running the difference quotient in f64 keeps the comparison noise orders
//! of magnitude below the tolerance, so a failure means a wrong gradient,
//! not rounding debris.
//!
//! Inputs are drawn from a seeded generator and redrawn until no ReLU
//! pre-activation sits within a few step sizes of zero, per the layer
//! contract that checks avoid kink neighborhoods.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{conv2d_backward, depthwise_conv2d_backward, dws_block_backward, dws_block_train, ConvKernel};
use crate::linear::linear_backward;
use crate::resize::{resize_bilinear, resize_bilinear_backward};
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv { stride: usize, pad: usize },
    Depthwise { stride: usize, pad: usize },
    DwsBlock { stride: usize },
    Linear,
    ResizeBilinear { out_h: usize, out_w: usize },
}

impl LayerKind {
    pub fn label(&self) -> String {
        match self {
            LayerKind::Conv { stride, pad } => format!("conv2d(s{stride},p{pad})"),
            LayerKind::Depthwise { stride, pad } => format!("depthwise(s{stride},p{pad})"),
            LayerKind::DwsBlock { stride } => format!("dws_block(s{stride})"),
            LayerKind::Linear => "linear".to_string(),
            LayerKind::ResizeBilinear { out_h, out_w } => format!("resize({out_h}x{out_w})"),
        }
    }
}

/// Layer shapes exercised by the acceptance gradient sweep.
pub fn standard_layer_suite() -> Vec<LayerKind> {
    vec![
        LayerKind::Conv { stride: 1, pad: 1 },
        LayerKind::Conv { stride: 2, pad: 1 },
        LayerKind::Depthwise { stride: 1, pad: 1 },
        LayerKind::Depthwise { stride: 2, pad: 1 },
        LayerKind::DwsBlock { stride: 1 },
        LayerKind::DwsBlock { stride: 2 },
        LayerKind::Linear,
        LayerKind::ResizeBilinear { out_h: 11, out_w: 9 },
        LayerKind::ResizeBilinear { out_h: 3, out_w: 4 },
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Maximum acceptable relative error.
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-3,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOutcome {
    pub max_rel_err: f64,
    pub elements_checked: usize,
    pub passed: bool,
}

// ---------------------------------------------------------------------------
// f64 reference forwards (definitional, independent of the f32 kernels)
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn ref_conv2d(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    wt: &[f64],
    (o, i, kh, kw): (usize, usize, usize, usize),
    b: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, (usize, usize, usize, usize)) {
    assert_eq!(c, i);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0f64; n * o * oh * ow];
    for ni in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((ni * c + ic) * h + iy as usize) * w + ix as usize];
                                let wv = wt[((oc * c + ic) * kh + ky) * kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((ni * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, (n, o, oh, ow))
}

#[allow(clippy::too_many_arguments)]
fn ref_depthwise(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    wt: &[f64],
    (kc, kh, kw): (usize, usize, usize),
    b: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, (usize, usize, usize, usize)) {
    assert_eq!(c, kc);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0f64; n * c * oh * ow];
    for ni in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[ch];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += x[((ni * c + ch) * h + iy as usize) * w + ix as usize]
                                * wt[(ch * kh + ky) * kw + kx];
                        }
                    }
                    out[((ni * c + ch) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, (n, c, oh, ow))
}

fn ref_linear(x: &[f64], (n, inf): (usize, usize), wt: &[f64], outf: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0f64; n * outf];
    for i in 0..n {
        for o in 0..outf {
            let mut acc = b[o];
            for j in 0..inf {
                acc += x[i * inf + j] * wt[o * inf + j];
            }
            out[i * outf + o] = acc;
        }
    }
    out
}

fn ref_resize(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let mut out = vec![0.0f64; n * c * out_h * out_w];
    for plane in 0..n * c {
        for oy in 0..out_h {
            let sy = ((oy as f64 + 0.5) * h as f64 / out_h as f64 - 0.5)
                .clamp(0.0, (h - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let ty = sy - y0 as f64;
            for ox in 0..out_w {
                let sx = ((ox as f64 + 0.5) * w as f64 / out_w as f64 - 0.5)
                    .clamp(0.0, (w - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let tx = sx - x0 as f64;
                let p = |yy: usize, xx: usize| x[(plane * h + yy) * w + xx];
                let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
                let bot = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
                out[(plane * out_h + oy) * out_w + ox] = top * (1.0 - ty) + ty * bot;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Check driver
// ---------------------------------------------------------------------------

/// All degrees of freedom for one check: the input followed by each
/// parameter block, all stored as the exact f64 values of the f32 tensors.
struct Dof {
    values: Vec<f64>,
    // (offset, len) per block: block 0 is the input.
    blocks: Vec<(usize, usize)>,
}

impl Dof {
    fn new(blocks: Vec<Vec<f64>>) -> Self {
        let mut values = Vec::new();
        let mut spans = Vec::new();
        for b in blocks {
            spans.push((values.len(), b.len()));
            values.extend_from_slice(&b);
        }
        Dof {
            values,
            blocks: spans,
        }
    }

    fn block(&self, i: usize) -> &[f64] {
        let (o, l) = self.blocks[i];
        &self.values[o..o + l]
    }
}

fn widen(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}


fn max_rel_err(analytic: &[f64], dof: &Dof, objective: impl Fn(&[f64]) -> f64, h: f64) -> (f64, usize) {
    // Floor the denominator at a small fraction of the largest gradient so
    // elements whose true gradient is ~0 are judged on the layer's scale.
    let mut fd = vec![0.0f64; dof.values.len()];
    let mut work = dof.values.clone();
    for i in 0..work.len() {
        let orig = work[i];
        work[i] = orig + h;
        let lp = objective(&work);
        work[i] = orig - h;
        let lm = objective(&work);
        work[i] = orig;
        fd[i] = (lp - lm) / (2.0 * h);
    }
    let max_abs_fd = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * max_abs_fd).max(1e-9);
    let mut worst = 0.0f64;
    for i in 0..fd.len() {
        let denom = analytic[i].abs().max(fd[i].abs()).max(floor);
        let rel = (analytic[i] - fd[i]).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    (worst, fd.len())
}

/// Compare analytic gradients of one layer against central finite
/// differences on seeded random data. Returns the worst relative error.
pub fn grad_check(kind: &LayerKind, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (max_rel, checked) = match *kind {
        LayerKind::Conv { stride, pad } => {
            let x = Tensor::randn(&[1, 3, 8, 8], 1.0, &mut rng);
            let k = ConvKernel {
                weights: Tensor::randn(&[4, 3, 3, 3], 0.3, &mut rng),
                bias: Tensor::randn(&[4], 0.1, &mut rng).data().to_vec(),
            };
            let proj = Tensor::randn(
                crate::conv::conv2d(&x, &k, stride, pad)?.dims(),
                1.0,
                &mut rng,
            );
            let g = conv2d_backward(&x, &k, stride, pad, &proj)?;
            let analytic: Vec<f64> = widen(&g.d_input)
                .into_iter()
                .chain(widen(&g.d_weights))
                .chain(g.d_bias.iter().map(|&v| v as f64))
                .collect();
            let dof = Dof::new(vec![
                widen(&x),
                widen(&k.weights),
                k.bias.iter().map(|&v| v as f64).collect(),
            ]);
            let xd = (1, 3, 8, 8);
            let wd = (4, 3, 3, 3);
            let pj = widen(&proj);
            max_rel_err(
                &analytic,
                &dof,
                |v| {
                    let d = Dof {
                        values: v.to_vec(),
                        blocks: dof.blocks.clone(),
                    };
                    let (out, _) = ref_conv2d(d.block(0), xd, d.block(1), wd, d.block(2), stride, pad);
                    out.iter().zip(&pj).map(|(a, b)| a * b).sum()
                },
                cfg.h,
            )
        }
        LayerKind::Depthwise { stride, pad } => {
            let x = Tensor::randn(&[1, 4, 8, 8], 1.0, &mut rng);
            let k = ConvKernel {
                weights: Tensor::randn(&[4, 1, 3, 3], 0.4, &mut rng),
                bias: Tensor::randn(&[4], 0.1, &mut rng).data().to_vec(),
            };
            let out = crate::conv::depthwise_conv2d(&x, &k, stride, pad)?;
            let proj = Tensor::randn(out.dims(), 1.0, &mut rng);
            let g = depthwise_conv2d_backward(&x, &k, stride, pad, &proj)?;
            let analytic: Vec<f64> = widen(&g.d_input)
                .into_iter()
                .chain(widen(&g.d_weights))
                .chain(g.d_bias.iter().map(|&v| v as f64))
                .collect();
            let dof = Dof::new(vec![
                widen(&x),
                widen(&k.weights),
                k.bias.iter().map(|&v| v as f64).collect(),
            ]);
            let pj = widen(&proj);
            max_rel_err(
                &analytic,
                &dof,
                |v| {
                    let d = Dof {
                        values: v.to_vec(),
                        blocks: dof.blocks.clone(),
                    };
                    let (out, _) =
                        ref_depthwise(d.block(0), (1, 4, 8, 8), d.block(1), (4, 3, 3), d.block(2), stride, pad);
                    out.iter().zip(&pj).map(|(a, b)| a * b).sum()
                },
                cfg.h,
            )
        }
        LayerKind::DwsBlock { stride } => {
            // Redraw until no pre-ReLU activation sits near the kink.
            let mut attempt = 0;
            loop {
                attempt += 1;
                let x = Tensor::randn(&[1, 3, 8, 8], 1.0, &mut rng);
                let dw = ConvKernel {
                    weights: Tensor::randn(&[3, 1, 3, 3], 0.4, &mut rng),
                    bias: Tensor::randn(&[3], 0.1, &mut rng).data().to_vec(),
                };
                let pw = ConvKernel {
                    weights: Tensor::randn(&[5, 3, 1, 1], 0.5, &mut rng),
                    bias: Tensor::randn(&[5], 0.1, &mut rng).data().to_vec(),
                };
                let dof = Dof::new(vec![
                    widen(&x),
                    widen(&dw.weights),
                    dw.bias.iter().map(|&v| v as f64).collect(),
                    widen(&pw.weights),
                    pw.bias.iter().map(|&v| v as f64).collect(),
                ]);
                let pre = {
                    let (mid, md) = ref_depthwise(
                        dof.block(0),
                        (1, 3, 8, 8),
                        dof.block(1),
                        (3, 3, 3),
                        dof.block(2),
                        stride,
                        1,
                    );
                    let (pre, _) =
                        ref_conv2d(&mid, md, dof.block(3), (5, 3, 1, 1), dof.block(4), 1, 0);
                    pre
                };
                let kink = pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                if kink <= 5.0 * cfg.h && attempt < 100 {
                    continue;
                }
                let (out, mid) = dws_block_train(&x, &dw, &pw, stride)?;
                let proj = Tensor::randn(out.dims(), 1.0, &mut rng);
                let g = dws_block_backward(&x, &dw, &pw, stride, &mid, &out, &proj)?;
                let analytic: Vec<f64> = widen(&g.d_input)
                    .into_iter()
                    .chain(widen(&g.d_dw_weights))
                    .chain(g.d_dw_bias.iter().map(|&v| v as f64))
                    .chain(widen(&g.d_pw_weights))
                    .chain(g.d_pw_bias.iter().map(|&v| v as f64))
                    .collect();
                let pj = widen(&proj);
                break max_rel_err(
                    &analytic,
                    &dof,
                    |v| {
                        let d = Dof {
                            values: v.to_vec(),
                            blocks: dof.blocks.clone(),
                        };
                        let (mid, md) = ref_depthwise(
                            d.block(0),
                            (1, 3, 8, 8),
                            d.block(1),
                            (3, 3, 3),
                            d.block(2),
                            stride,
                            1,
                        );
                        let (pre, _) =
                            ref_conv2d(&mid, md, d.block(3), (5, 3, 1, 1), d.block(4), 1, 0);
                        pre.iter()
                            .zip(&pj)
                            .map(|(a, b)| a.max(0.0) * b)
                            .sum()
                    },
                    cfg.h,
                );
            }
        }
        LayerKind::Linear => {
            let x = Tensor::randn(&[3, 10], 1.0, &mut rng);
            let w = Tensor::randn(&[7, 10], 0.3, &mut rng);
            let b = Tensor::randn(&[7], 0.1, &mut rng);
            let bias: Vec<f32> = b.data().to_vec();
            let out = crate::linear::linear(&x, &w, &bias)?;
            let proj = Tensor::randn(out.dims(), 1.0, &mut rng);
            let g = linear_backward(&x, &w, &proj)?;
            let analytic: Vec<f64> = widen(&g.d_input)
                .into_iter()
                .chain(widen(&g.d_weights))
                .chain(g.d_bias.iter().map(|&v| v as f64))
                .collect();
            let dof = Dof::new(vec![
                widen(&x),
                widen(&w),
                bias.iter().map(|&v| v as f64).collect(),
            ]);
            let pj = widen(&proj);
            max_rel_err(
                &analytic,
                &dof,
                |v| {
                    let d = Dof {
                        values: v.to_vec(),
                        blocks: dof.blocks.clone(),
                    };
                    let out = ref_linear(d.block(0), (3, 10), d.block(1), 7, d.block(2));
                    out.iter().zip(&pj).map(|(a, b)| a * b).sum()
                },
                cfg.h,
            )
        }
        LayerKind::ResizeBilinear { out_h, out_w } => {
            let x = Tensor::randn(&[1, 2, 5, 7], 1.0, &mut rng);
            let fwd = resize_bilinear(&x, out_h, out_w)?;
            let proj = Tensor::randn(fwd.dims(), 1.0, &mut rng);
            let d_input = resize_bilinear_backward(5, 7, &proj)?;
            let analytic = widen(&d_input);
            let dof = Dof::new(vec![widen(&x)]);
            let pj = widen(&proj);
            max_rel_err(
                &analytic,
                &dof,
                |v| {
                    let out = ref_resize(v, (1, 2, 5, 7), out_h, out_w);
                    out.iter().zip(&pj).map(|(a, b)| a * b).sum()
                },
                cfg.h,
            )
        }
    };
    Ok(GradCheckOutcome {
        max_rel_err: max_rel,
        elements_checked: checked,
        passed: max_rel <= cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_gradients_pass_at_default_tolerance() {
        let cfg = GradCheckConfig::default();
        let out = grad_check(&LayerKind::Conv { stride: 1, pad: 1 }, 42, &cfg).unwrap();
        assert!(out.passed, "max rel err {}", out.max_rel_err);
        let out = grad_check(&LayerKind::Conv { stride: 2, pad: 1 }, 43, &cfg).unwrap();
        assert!(out.passed, "max rel err {}", out.max_rel_err);
    }

    #[test]
    fn dws_block_gradients_pass_at_default_tolerance() {
        let cfg = GradCheckConfig::default();
        for stride in [1, 2] {
            let out = grad_check(&LayerKind::DwsBlock { stride }, 7, &cfg).unwrap();
            assert!(out.passed, "stride {stride}: {}", out.max_rel_err);
        }
    }

    #[test]
    fn linear_gradients_pass_at_tight_tolerance() {
        let cfg = GradCheckConfig {
            h: 1e-3,
            tolerance: 1e-5,
        };
        let out = grad_check(&LayerKind::Linear, 11, &cfg).unwrap();
        assert!(out.passed, "max rel err {}", out.max_rel_err);
    }

    #[test]
    fn full_suite_passes_over_several_seeds() {
        let cfg = GradCheckConfig::default();
        for kind in standard_layer_suite() {
            for seed in 0..3 {
                let out = grad_check(&kind, seed, &cfg).unwrap();
                assert!(
                    out.passed,
                    "{} seed {seed}: max rel err {}",
                    kind.label(),
                    out.max_rel_err
                );
            }
        }
    }
}
