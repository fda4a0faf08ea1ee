//! ROI heads: classification + box refinement, and mask/part logits.

use rand_chacha::ChaCha8Rng;
use skyhook_nn::{relu, relu_backward, Tensor};

use crate::layers::{ConvDesc, GradMap, LinearDesc, ParamMap, P};
use crate::types::{BinMask, BoxF};
use crate::Result;

pub const BOX_POOL: usize = 7;
pub const MASK_POOL: usize = 14;
/// Background + four brick classes.
pub const NUM_CLASSES: usize = 5;

/// Classification + class-agnostic box refinement from a 7x7 ROI crop.
#[derive(Debug, Clone)]
pub struct BoxHeadDesc {
    pub fc1: LinearDesc,
    pub cls: LinearDesc,
    pub reg: LinearDesc,
    pub width: usize,
}

pub struct BoxHeadCache {
    pub flat: Tensor,
    pub hidden: Tensor,
}

impl BoxHeadDesc {
    pub fn new(prefix: &str, width: usize) -> Self {
        let in_f = width * BOX_POOL * BOX_POOL;
        let hidden = width * 4;
        BoxHeadDesc {
            fc1: LinearDesc::new(format!("{prefix}.fc1"), in_f, hidden),
            cls: LinearDesc::new(format!("{prefix}.cls"), hidden, NUM_CLASSES),
            reg: LinearDesc::new(format!("{prefix}.reg"), hidden, 4),
            width,
        }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        self.fc1.init(params, rng);
        self.cls.init(params, rng);
        self.reg.init(params, rng);
    }

    pub fn param_count(&self) -> usize {
        self.fc1.param_count() + self.cls.param_count() + self.reg.param_count()
    }

    pub fn macs_per_roi(&self) -> u64 {
        self.fc1.macs() + self.cls.macs() + self.reg.macs()
    }

    /// `rois` is `[n, width, 7, 7]` stacked crops. Returns class logits
    /// `[n, 5]`, refinement deltas `[n, 4]` and the cache.
    pub fn forward(&self, p: &P, rois: &Tensor) -> Result<(Tensor, Tensor, BoxHeadCache)> {
        let (n, c, ph, pw) = rois.rank4()?;
        let flat = rois.reshape(&[n, c * ph * pw])?;
        let hidden = relu(&self.fc1.fwd(p, &flat)?);
        let cls = self.cls.fwd(p, &hidden)?;
        let reg = self.reg.fwd(p, &hidden)?;
        Ok((cls, reg, BoxHeadCache { flat, hidden }))
    }

    /// Backward; returns gradient w.r.t. the stacked ROI crops.
    pub fn backward(
        &self,
        p: &P,
        cache: &BoxHeadCache,
        g_cls: &Tensor,
        g_reg: &Tensor,
        grads: &mut GradMap,
    ) -> Result<Tensor> {
        let mut g_hidden = self.cls.bwd(p, &cache.hidden, g_cls, grads)?;
        g_hidden.add_assign(&self.reg.bwd(p, &cache.hidden, g_reg, grads)?)?;
        let g_pre = relu_backward(&cache.hidden, &g_hidden);
        let g_flat = self.fc1.bwd(p, &cache.flat, &g_pre, grads)?;
        let n = g_flat.dims()[0];
        Ok(g_flat.reshape(&[n, self.width, BOX_POOL, BOX_POOL])?)
    }
}

/// Two-conv mask head over a 14x14 ROI crop; one logit channel out.
#[derive(Debug, Clone)]
pub struct MaskHeadDesc {
    pub c1: ConvDesc,
    pub c2: ConvDesc,
}

pub struct MaskHeadCache {
    pub mid: Tensor,
}

impl MaskHeadDesc {
    pub fn new(prefix: &str, width: usize) -> Self {
        MaskHeadDesc {
            c1: ConvDesc::new(format!("{prefix}.c1"), width, width, 3, 1, 1),
            c2: ConvDesc::new(format!("{prefix}.c2"), width, 1, 3, 1, 1),
        }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        self.c1.init(params, rng);
        self.c2.init(params, rng);
    }

    pub fn param_count(&self) -> usize {
        self.c1.param_count() + self.c2.param_count()
    }

    pub fn macs_per_roi(&self) -> u64 {
        self.c1.macs(MASK_POOL, MASK_POOL) + self.c2.macs(MASK_POOL, MASK_POOL)
    }

    /// `rois` is `[n, width, 14, 14]`; returns logits `[n, 1, 14, 14]`.
    pub fn forward(&self, p: &P, rois: &Tensor) -> Result<(Tensor, MaskHeadCache)> {
        let mid = relu(&self.c1.fwd(p, rois)?);
        let logits = self.c2.fwd(p, &mid)?;
        Ok((logits, MaskHeadCache { mid }))
    }

    pub fn backward(
        &self,
        p: &P,
        rois: &Tensor,
        cache: &MaskHeadCache,
        g_logits: &Tensor,
        grads: &mut GradMap,
    ) -> Result<Tensor> {
        let g_mid = self.c2.bwd(p, &cache.mid, g_logits, grads)?;
        let g_pre = relu_backward(&cache.mid, &g_mid);
        self.c1.bwd(p, rois, &g_pre, grads)
    }
}

/// Paste a probability grid (e.g. 14x14) into image space over `b`,
/// thresholding at 0.5. Pixels outside the box stay zero.
pub fn paste_mask(probs: &[f32], grid: usize, b: &BoxF, img_w: usize, img_h: usize) -> BinMask {
    let mut out = BinMask::zeros(img_w, img_h);
    if b.w() <= 0.0 || b.h() <= 0.0 {
        return out;
    }
    let x_start = b.x0.floor().max(0.0) as usize;
    let x_end = (b.x1.ceil() as usize).min(img_w);
    let y_start = b.y0.floor().max(0.0) as usize;
    let y_end = (b.y1.ceil() as usize).min(img_h);
    let g = grid as f64;
    for py in y_start..y_end {
        let yc = py as f64 + 0.5;
        if yc < b.y0 || yc >= b.y1 {
            continue;
        }
        let gy = ((yc - b.y0) / b.h() * g - 0.5).clamp(0.0, g - 1.0);
        let ylo = gy.floor() as usize;
        let yhi = (ylo + 1).min(grid - 1);
        let ty = gy - ylo as f64;
        for px in x_start..x_end {
            let xc = px as f64 + 0.5;
            if xc < b.x0 || xc >= b.x1 {
                continue;
            }
            let gx = ((xc - b.x0) / b.w() * g - 0.5).clamp(0.0, g - 1.0);
            let xlo = gx.floor() as usize;
            let xhi = (xlo + 1).min(grid - 1);
            let tx = gx - xlo as f64;
            let v = probs[ylo * grid + xlo] as f64 * (1.0 - ty) * (1.0 - tx)
                + probs[ylo * grid + xhi] as f64 * (1.0 - ty) * tx
                + probs[yhi * grid + xlo] as f64 * ty * (1.0 - tx)
                + probs[yhi * grid + xhi] as f64 * ty * tx;
            if v >= 0.5 {
                out.set(px, py, true);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn box_head_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let desc = BoxHeadDesc::new("det.box", 12);
        let mut params = ParamMap::new();
        desc.init(&mut params, &mut rng);
        let rois = Tensor::randn(&[6, 12, 7, 7], 1.0, &mut rng);
        let (cls, reg, _) = desc.forward(&P(&params), &rois).unwrap();
        assert_eq!(cls.dims(), &[6, 5]);
        assert_eq!(reg.dims(), &[6, 4]);
    }

    #[test]
    fn mask_head_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let desc = MaskHeadDesc::new("det.mask", 12);
        let mut params = ParamMap::new();
        desc.init(&mut params, &mut rng);
        let rois = Tensor::randn(&[3, 12, 14, 14], 1.0, &mut rng);
        let (logits, _) = desc.forward(&P(&params), &rois).unwrap();
        assert_eq!(logits.dims(), &[3, 1, 14, 14]);
    }

    #[test]
    fn paste_all_ones_fills_the_box_interior() {
        let probs = vec![1.0f32; 14 * 14];
        let b = BoxF::new(4.0, 6.0, 12.0, 14.0);
        let m = paste_mask(&probs, 14, &b, 20, 20);
        assert!(m.get(5, 7));
        assert!(m.get(11, 13));
        assert!(!m.get(3, 7));
        assert!(!m.get(5, 15));
        assert_eq!(m.area(), 8 * 8);
    }

    #[test]
    fn paste_all_zeros_is_empty() {
        let probs = vec![0.0f32; 14 * 14];
        let b = BoxF::new(0.0, 0.0, 20.0, 20.0);
        assert_eq!(paste_mask(&probs, 14, &b, 20, 20).area(), 0);
    }

    #[test]
    fn paste_clips_to_image_bounds() {
        let probs = vec![1.0f32; 14 * 14];
        let b = BoxF::new(-5.0, -5.0, 10.0, 10.0);
        let m = paste_mask(&probs, 14, &b, 8, 8);
        assert_eq!(m.area(), 64);
    }
}
