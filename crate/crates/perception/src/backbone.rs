//! Five-stage strided backbone.
//!
//! Stage 1 is a full 3x3 convolution (stride 2) + ReLU; stages 2..5 are
//! depthwise-separable blocks (stride 2 each). Total stride 32. No
//! normalization layers; biases start at zero so a zero image produces zero
//! features at every stage.

use rand_chacha::ChaCha8Rng;
use skyhook_nn::Tensor;

use crate::layers::{relu_grad, relu_t, ConvDesc, DwsDesc, GradMap, ParamMap, P};
use crate::Result;

#[derive(Debug, Clone)]
pub struct BackboneDesc {
    pub stage1: ConvDesc,
    pub stages: Vec<DwsDesc>,
}

/// Forward caches needed by the backward pass.
pub struct BackboneCache {
    /// Post-ReLU output of every stage, index 0 = stage 1.
    pub stages: Vec<Tensor>,
    /// Depthwise mid tensors for stages 2..5.
    pub mids: Vec<Tensor>,
}

impl BackboneDesc {
    pub fn new(prefix: &str, in_c: usize, channels: [usize; 5]) -> Self {
        let stage1 = ConvDesc::new(format!("{prefix}.s1"), in_c, channels[0], 3, 2, 1);
        let stages = (2..=5)
            .map(|i| {
                DwsDesc::new(
                    format!("{prefix}.s{i}"),
                    channels[i - 2],
                    channels[i - 1],
                    2,
                )
            })
            .collect();
        BackboneDesc { stage1, stages }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        self.stage1.init(params, rng);
        for s in &self.stages {
            s.init(params, rng);
        }
    }

    pub fn param_count(&self) -> usize {
        self.stage1.param_count() + self.stages.iter().map(|s| s.param_count()).sum::<usize>()
    }

    /// MACs for one forward at the given input resolution.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (mut oh, mut ow) = (h.div_euclid(2), w.div_euclid(2));
        let mut total = self.stage1.macs(oh, ow);
        for s in &self.stages {
            oh = oh.div_euclid(2);
            ow = ow.div_euclid(2);
            total += s.macs(oh, ow);
        }
        total
    }

    /// Stage outputs only (inference).
    pub fn forward(&self, p: &P, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs = Vec::with_capacity(5);
        let mut cur = relu_t(&self.stage1.fwd(p, x)?);
        outs.push(cur.clone());
        for s in &self.stages {
            cur = s.fwd(p, &cur)?;
            outs.push(cur.clone());
        }
        Ok(outs)
    }

    pub fn forward_train(&self, p: &P, x: &Tensor) -> Result<BackboneCache> {
        let mut stages = Vec::with_capacity(5);
        let mut mids = Vec::with_capacity(4);
        let mut cur = relu_t(&self.stage1.fwd(p, x)?);
        stages.push(cur.clone());
        for s in &self.stages {
            let (out, mid) = s.fwd_train(p, &cur)?;
            mids.push(mid);
            stages.push(out.clone());
            cur = out;
        }
        Ok(BackboneCache { stages, mids })
    }

    /// Backward from per-stage output gradients (None = no gradient arrives
    /// at that stage directly). Returns d_input.
    pub fn backward(
        &self,
        p: &P,
        x: &Tensor,
        cache: &BackboneCache,
        stage_grads: Vec<Option<Tensor>>,
        grads: &mut GradMap,
    ) -> Result<Tensor> {
        assert_eq!(stage_grads.len(), 5, "one gradient slot per stage");
        let mut flowing: Option<Tensor> = None;
        for i in (1..5).rev() {
            let mut g = match (flowing.take(), &stage_grads[i]) {
                (Some(mut f), Some(extra)) => {
                    f.add_assign(extra)?;
                    f
                }
                (Some(f), None) => f,
                (None, Some(extra)) => extra.clone(),
                (None, None) => continue,
            };
            let input = &cache.stages[i - 1];
            let s = &self.stages[i - 1];
            g = s.bwd(p, input, &cache.mids[i - 1], &cache.stages[i], &g, grads)?;
            flowing = Some(g);
        }
        let g1 = match (flowing.take(), &stage_grads[0]) {
            (Some(mut f), Some(extra)) => {
                f.add_assign(extra)?;
                f
            }
            (Some(f), None) => f,
            (None, Some(extra)) => extra.clone(),
            (None, None) => {
                return Ok(Tensor::zeros(x.dims()));
            }
        };
        let g_pre = relu_grad(&cache.stages[0], &g1);
        self.stage1.bwd(p, x, &g_pre, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::ARCH1_TABLE;
    use rand::SeedableRng;

    fn c1() -> (BackboneDesc, ParamMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let desc = BackboneDesc::new("c1", 3, ARCH1_TABLE.c1);
        let mut params = ParamMap::new();
        desc.init(&mut params, &mut rng);
        (desc, params)
    }

    #[test]
    fn stage_shapes_follow_the_stride_schedule() {
        let (desc, params) = c1();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[1, 3, 160, 160], 1.0, &mut rng);
        let stages = desc.forward(&P(&params), &x).unwrap();
        let expect = [
            [1usize, 4, 80, 80],
            [1, 8, 40, 40],
            [1, 16, 20, 20],
            [1, 32, 10, 10],
            [1, 32, 5, 5],
        ];
        for (s, e) in stages.iter().zip(&expect) {
            assert_eq!(s.dims(), e);
        }
    }

    #[test]
    fn zero_image_yields_zero_features_everywhere() {
        let (desc, params) = c1();
        let x = Tensor::zeros(&[1, 3, 64, 64]);
        let stages = desc.forward(&P(&params), &x).unwrap();
        for s in &stages {
            assert!(s.data().iter().all(|&v| v == 0.0), "nonzero feature");
        }
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let (desc, params) = c1();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[1, 3, 96, 96], 1.0, &mut rng);
        let a = desc.forward(&P(&params), &x).unwrap();
        let b = desc.forward(&P(&params), &x).unwrap();
        for (s, t) in a.iter().zip(&b) {
            assert!(s.bitwise_eq(t));
        }
    }

    #[test]
    fn train_forward_matches_inference_forward() {
        let (desc, params) = c1();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::randn(&[1, 3, 64, 64], 1.0, &mut rng);
        let stages = desc.forward(&P(&params), &x).unwrap();
        let cache = desc.forward_train(&P(&params), &x).unwrap();
        for (s, t) in stages.iter().zip(&cache.stages) {
            assert!(s.bitwise_eq(t));
        }
    }

    // f64 mirror of a dense 3x3/1x1 convolution, used as the finite-difference
    // oracle below (f32 forwards plus ReLU kinks make f32 central differences
    // too noisy for a whole-backbone check).
    #[allow(clippy::too_many_arguments)]
    fn conv64(
        x: &[f64],
        ic: usize,
        xh: usize,
        xw: usize,
        wt: &[f64],
        oc: usize,
        k: usize,
        b: &[f64],
        stride: usize,
        pad: usize,
    ) -> (Vec<f64>, usize, usize) {
        let oh = (xh + 2 * pad - k) / stride + 1;
        let ow = (xw + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for i in 0..ic {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < xh && (ix as usize) < xw
                                {
                                    acc += x[(i * xh + iy as usize) * xw + ix as usize]
                                        * wt[((o * ic + i) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        (out, oh, ow)
    }

    fn dw64(
        x: &[f64],
        c: usize,
        xh: usize,
        xw: usize,
        wt: &[f64],
        b: &[f64],
        stride: usize,
    ) -> (Vec<f64>, usize, usize) {
        let oh = (xh + 2 - 3) / stride + 1;
        let ow = (xw + 2 - 3) / stride + 1;
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[ch];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * stride + ky) as isize - 1;
                            let ix = (ox * stride + kx) as isize - 1;
                            if iy >= 0 && ix >= 0 && (iy as usize) < xh && (ix as usize) < xw {
                                acc += x[(ch * xh + iy as usize) * xw + ix as usize]
                                    * wt[(ch * 3 + ky) * 3 + kx];
                            }
                        }
                    }
                    out[(ch * oh + oy) * ow + ox] = acc;
                }
            }
        }
        (out, oh, ow)
    }

    #[test]
    fn backward_direction_matches_f64_oracle() {
        // Directional derivative through all five stages: analytic <g, d>
        // against a central difference of an independent f64 forward.
        let (desc, params) = c1();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::randn(&[1, 3, 64, 64], 0.5, &mut rng);

        let cache = desc.forward_train(&P(&params), &x).unwrap();
        let mut grads = GradMap::new();
        let g_top = Tensor::filled(cache.stages[4].dims(), 1.0);
        desc.backward(
            &P(&params),
            &x,
            &cache,
            vec![None, None, None, None, Some(g_top)],
            &mut grads,
        )
        .unwrap();

        // Random direction over all parameters.
        let mut dir: Vec<(String, Vec<f64>)> = Vec::new();
        for (k, v) in params.iter() {
            let d = Tensor::randn(v.dims(), 1.0, &mut rng);
            dir.push((k.clone(), d.data().iter().map(|&v| v as f64).collect()));
        }
        let dot: f64 = dir
            .iter()
            .map(|(k, d)| {
                grads.map.get(k).map_or(0.0, |g| {
                    g.data()
                        .iter()
                        .zip(d)
                        .map(|(&a, &b)| a as f64 * b)
                        .sum::<f64>()
                })
            })
            .sum();

        let base: std::collections::BTreeMap<String, Vec<f64>> = params
            .iter()
            .map(|(k, v)| (k.clone(), v.data().iter().map(|&x| x as f64).collect()))
            .collect();
        let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        let table = ARCH1_TABLE.c1;
        let objective = |p: &std::collections::BTreeMap<String, Vec<f64>>| -> f64 {
            let (mut cur, mut h, mut w) =
                conv64(&x64, 3, 64, 64, &p["c1.s1.w"], table[0], 3, &p["c1.s1.b"], 2, 1);
            for v in &mut cur {
                *v = v.max(0.0);
            }
            for i in 2..=5 {
                let c_in = table[i - 2];
                let c_out = table[i - 1];
                let (mid, mh, mw) = dw64(
                    &cur,
                    c_in,
                    h,
                    w,
                    &p[&format!("c1.s{i}.dw.w")],
                    &p[&format!("c1.s{i}.dw.b")],
                    2,
                );
                let (mut out, oh, ow) = conv64(
                    &mid,
                    c_in,
                    mh,
                    mw,
                    &p[&format!("c1.s{i}.pw.w")],
                    c_out,
                    1,
                    &p[&format!("c1.s{i}.pw.b")],
                    1,
                    0,
                );
                for v in &mut out {
                    *v = v.max(0.0);
                }
                cur = out;
                h = oh;
                w = ow;
            }
            cur.iter().sum()
        };

        let h = 1e-6f64;
        let shift = |sign: f64| {
            let mut out = base.clone();
            for (k, d) in &dir {
                for (v, dv) in out.get_mut(k).unwrap().iter_mut().zip(d) {
                    *v += sign * h * dv;
                }
            }
            out
        };
        let fd = (objective(&shift(1.0)) - objective(&shift(-1.0))) / (2.0 * h);
        let denom = dot.abs().max(fd.abs()).max(1e-6);
        assert!(
            ((dot - fd) / denom).abs() < 1e-2,
            "directional derivative mismatch: analytic {dot}, fd {fd}"
        );
    }
}
