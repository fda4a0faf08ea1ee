//! Siamese mask tracker.
//!
//! Current frame, previous frame and the previous support mask run through
//! their backbones (the two image passes share the scene backbone weights;
//! the mask runs the small mask backbone). Stage 3..5 features of all three
//! streams are concatenated per level, aggregated by a narrow pyramid, and a
//! 1x1 head on the x2-upsampled finest level produces a stride-4 logit map.
//! Full-resolution masks come from one more bilinear upsample + 0.5
//! threshold. A track is lost when the mask area falls below the scaled
//! equivalent of 20 px at 160x160.

use skyhook_nn::{resize_bilinear, Tensor};

use crate::layers::{apply_sigmoid, concat_channels, ConvDesc};
use crate::types::{BinMask, SupportMask};
use crate::Result;

pub const LOST_AREA_AT_160: f64 = 20.0;

/// Lost-track area threshold in pixels for a given resolution.
pub fn lost_threshold(w: usize, h: usize) -> f64 {
    LOST_AREA_AT_160 * (w * h) as f64 / (160.0 * 160.0)
}

#[derive(Debug, Clone)]
pub struct TrackOutcome {
    pub mask: SupportMask,
    pub lost: bool,
}

/// 1x1 logit head applied to the upsampled finest pyramid level.
pub fn head_desc(prefix: &str, width: usize) -> ConvDesc {
    ConvDesc::new(format!("{prefix}.head"), width, 1, 1, 1, 0)
}

/// Concatenated per-level channel counts for the tracker pyramid input.
pub fn concat_channels_per_level(c1: &[usize; 5], c2: &[usize; 5]) -> [usize; 3] {
    [
        c1[2] * 2 + c2[2],
        c1[3] * 2 + c2[3],
        c1[4] * 2 + c2[4],
    ]
}

/// Fuse per-stream stage features into per-level concat tensors.
pub fn fuse_stages(
    cur: &[Tensor],
    prev: &[Tensor],
    mask: &[Tensor],
) -> Result<[Tensor; 3]> {
    Ok([
        concat_channels(&[&cur[2], &prev[2], &mask[2]])?,
        concat_channels(&[&cur[3], &prev[3], &mask[3]])?,
        concat_channels(&[&cur[4], &prev[4], &mask[4]])?,
    ])
}

/// Stride-4 logit map -> full-res binary mask + lost flag.
pub fn finalize_mask(logits_s4: &Tensor, img_w: usize, img_h: usize, t: u64) -> Result<TrackOutcome> {
    let probs = apply_sigmoid(logits_s4);
    let full = resize_bilinear(&probs, img_h, img_w)?;
    let mut mask = BinMask::zeros(img_w, img_h);
    let d = full.data();
    for (i, &v) in d.iter().enumerate() {
        if v >= 0.5 {
            mask.data[i] = 1;
        }
    }
    let lost = (mask.area() as f64) < lost_threshold(img_w, img_h);
    Ok(TrackOutcome {
        mask: SupportMask::new(mask, t),
        lost,
    })
}
