//! Feature pyramid over backbone stages 3..5.
//!
//! 1x1 lateral convs project each stage to a common width; the top-down path
//! bilinearly upsamples the coarser merged map and adds it; a 3x3 smoothing
//! conv produces each output level. No activation on pyramid outputs.

use rand_chacha::ChaCha8Rng;
use skyhook_nn::{resize_bilinear, resize_bilinear_backward, Tensor};

use crate::layers::{ConvDesc, GradMap, ParamMap, P};
use crate::Result;

#[derive(Debug, Clone)]
pub struct FpnDesc {
    pub lat: [ConvDesc; 3],
    pub smooth: [ConvDesc; 3],
    pub width: usize,
}

pub struct FpnCache {
    /// Merged lateral maps (inputs to the smoothing convs), fine to coarse.
    pub merged: [Tensor; 3],
}

impl FpnDesc {
    /// `in_ch` are the stage 3/4/5 channel counts.
    pub fn new(prefix: &str, in_ch: [usize; 3], width: usize) -> Self {
        let lat = [
            ConvDesc::new(format!("{prefix}.lat3"), in_ch[0], width, 1, 1, 0),
            ConvDesc::new(format!("{prefix}.lat4"), in_ch[1], width, 1, 1, 0),
            ConvDesc::new(format!("{prefix}.lat5"), in_ch[2], width, 1, 1, 0),
        ];
        let smooth = [
            ConvDesc::new(format!("{prefix}.smooth3"), width, width, 3, 1, 1),
            ConvDesc::new(format!("{prefix}.smooth4"), width, width, 3, 1, 1),
            ConvDesc::new(format!("{prefix}.smooth5"), width, width, 3, 1, 1),
        ];
        FpnDesc { lat, smooth, width }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        for c in self.lat.iter().chain(&self.smooth) {
            c.init(params, rng);
        }
    }

    pub fn param_count(&self) -> usize {
        self.lat
            .iter()
            .chain(&self.smooth)
            .map(|c| c.param_count())
            .sum()
    }

    /// MACs given stage 3 spatial size (stages 4/5 are half and quarter).
    pub fn macs(&self, h3: usize, w3: usize) -> u64 {
        let dims = [(h3, w3), (h3 / 2, w3 / 2), (h3 / 4, w3 / 4)];
        let mut total = 0;
        for i in 0..3 {
            total += self.lat[i].macs(dims[i].0, dims[i].1);
            total += self.smooth[i].macs(dims[i].0, dims[i].1);
        }
        total
    }

    /// Returns pyramid levels [P3, P4, P5] and the cache for backward.
    pub fn forward(&self, p: &P, s3: &Tensor, s4: &Tensor, s5: &Tensor) -> Result<([Tensor; 3], FpnCache)> {
        let l5 = self.lat[2].fwd(p, s5)?;
        let mut l4 = self.lat[1].fwd(p, s4)?;
        let (_, _, h4, w4) = l4.rank4()?;
        l4.add_assign(&resize_bilinear(&l5, h4, w4)?)?;
        let mut l3 = self.lat[0].fwd(p, s3)?;
        let (_, _, h3, w3) = l3.rank4()?;
        l3.add_assign(&resize_bilinear(&l4, h3, w3)?)?;

        let p3 = self.smooth[0].fwd(p, &l3)?;
        let p4 = self.smooth[1].fwd(p, &l4)?;
        let p5 = self.smooth[2].fwd(p, &l5)?;
        Ok((
            [p3, p4, p5],
            FpnCache {
                merged: [l3, l4, l5],
            },
        ))
    }

    /// Backward from pyramid gradients; returns stage 3/4/5 gradients.
    pub fn backward(
        &self,
        p: &P,
        stage_inputs: [&Tensor; 3],
        cache: &FpnCache,
        grad_p: [&Tensor; 3],
        grads: &mut GradMap,
    ) -> Result<[Tensor; 3]> {
        let g_l3 = self.smooth[0].bwd(p, &cache.merged[0], grad_p[0], grads)?;
        let mut g_l4 = self.smooth[1].bwd(p, &cache.merged[1], grad_p[1], grads)?;
        let mut g_l5 = self.smooth[2].bwd(p, &cache.merged[2], grad_p[2], grads)?;

        let (_, _, h4, w4) = cache.merged[1].rank4()?;
        g_l4.add_assign(&resize_bilinear_backward(h4, w4, &g_l3)?)?;
        let (_, _, h5, w5) = cache.merged[2].rank4()?;
        g_l5.add_assign(&resize_bilinear_backward(h5, w5, &g_l4)?)?;

        let gs3 = self.lat[0].bwd(p, stage_inputs[0], &g_l3, grads)?;
        let gs4 = self.lat[1].bwd(p, stage_inputs[1], &g_l4, grads)?;
        let gs5 = self.lat[2].bwd(p, stage_inputs[2], &g_l5, grads)?;
        Ok([gs3, gs4, gs5])
    }
}
