//! Region proposal head, shared across pyramid levels.
//!
//! Per level: 3x3 conv (width -> width) + ReLU, then 1x1 conv to 15 channels
//! = 3 square anchors x (1 objectness logit + 4 box deltas). Anchor sides are
//! {0.5, 1, 2} x (4 x level stride), centered on feature cells.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use skyhook_nn::{sigmoid, Tensor};

use crate::layers::{relu_grad, relu_t, ConvDesc, GradMap, ParamMap, P};
use crate::roi::{box_iou, decode_deltas, encode_deltas, nms};
use crate::types::{BoxF, DetectThresholds};
use crate::Result;

pub const ANCHORS_PER_CELL: usize = 3;
pub const ANCHOR_SCALES: [f64; 3] = [0.5, 1.0, 2.0];
pub const RPN_CHANNELS: usize = ANCHORS_PER_CELL * 5;
pub const MAX_PROPOSALS: usize = 64;

/// Stride of pyramid level 3/4/5.
pub fn level_stride(level: usize) -> f64 {
    (1usize << level) as f64
}

/// Square anchor for cell (x, y) on `level` with scale index `a`.
pub fn anchor_box(level: usize, y: usize, x: usize, a: usize) -> BoxF {
    let s = level_stride(level);
    let cx = (x as f64 + 0.5) * s;
    let cy = (y as f64 + 0.5) * s;
    let side = 4.0 * s * ANCHOR_SCALES[a];
    BoxF::new(cx - side / 2.0, cy - side / 2.0, cx + side / 2.0, cy + side / 2.0)
}

#[derive(Debug, Clone)]
pub struct RpnDesc {
    pub conv: ConvDesc,
    pub out: ConvDesc,
}

pub struct RpnLevelCache {
    pub mid: Tensor,
    pub map: Tensor,
}

impl RpnDesc {
    pub fn new(prefix: &str, width: usize) -> Self {
        RpnDesc {
            conv: ConvDesc::new(format!("{prefix}.conv"), width, width, 3, 1, 1),
            out: ConvDesc::new(format!("{prefix}.out"), width, RPN_CHANNELS, 1, 1, 0),
        }
    }

    pub fn init(&self, params: &mut ParamMap, rng: &mut ChaCha8Rng) {
        self.conv.init(params, rng);
        self.out.init(params, rng);
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.out.param_count()
    }

    pub fn macs(&self, h3: usize, w3: usize) -> u64 {
        let dims = [(h3, w3), (h3 / 2, w3 / 2), (h3 / 4, w3 / 4)];
        dims.iter()
            .map(|&(h, w)| self.conv.macs(h, w) + self.out.macs(h, w))
            .sum()
    }

    /// Head output map for one pyramid level, with cache for backward.
    pub fn forward(&self, p: &P, feat: &Tensor) -> Result<RpnLevelCache> {
        let mid = relu_t(&self.conv.fwd(p, feat)?);
        let map = self.out.fwd(p, &mid)?;
        Ok(RpnLevelCache { mid, map })
    }

    /// Backward one level; returns gradient w.r.t. the pyramid feature.
    pub fn backward(
        &self,
        p: &P,
        feat: &Tensor,
        cache: &RpnLevelCache,
        grad_map: &Tensor,
        grads: &mut GradMap,
    ) -> Result<Tensor> {
        let g_mid = self.out.bwd(p, &cache.mid, grad_map, grads)?;
        let g_pre = relu_grad(&cache.mid, &g_mid);
        self.conv.bwd(p, feat, &g_pre, grads)
    }
}

/// Index of the objectness channel for anchor `a`.
pub fn obj_channel(a: usize) -> usize {
    a * 5
}

/// Index of the first delta channel for anchor `a`.
pub fn delta_channel(a: usize) -> usize {
    a * 5 + 1
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub bbox: BoxF,
    pub score: f32,
    pub level: usize,
}

/// Decode RPN maps (levels 3..5) into scored, NMS-filtered proposals.
pub fn decode_proposals(
    maps: &[&Tensor; 3],
    thr: &DetectThresholds,
    img_w: usize,
    img_h: usize,
) -> Result<Vec<Proposal>> {
    let mut cands: Vec<Proposal> = Vec::new();
    for (li, map) in maps.iter().enumerate() {
        let level = li + 3;
        let (_, c, h, w) = map.rank4()?;
        debug_assert_eq!(c, RPN_CHANNELS);
        for a in 0..ANCHORS_PER_CELL {
            for y in 0..h {
                for x in 0..w {
                    let score = sigmoid(map.at4(0, obj_channel(a), y, x));
                    if score < thr.objectness {
                        continue;
                    }
                    let d = [
                        map.at4(0, delta_channel(a), y, x),
                        map.at4(0, delta_channel(a) + 1, y, x),
                        map.at4(0, delta_channel(a) + 2, y, x),
                        map.at4(0, delta_channel(a) + 3, y, x),
                    ];
                    let anchor = anchor_box(level, y, x, a);
                    let bbox = decode_deltas(&anchor, d).clip(img_w as f64, img_h as f64);
                    if bbox.w() < 1.0 || bbox.h() < 1.0 {
                        continue;
                    }
                    cands.push(Proposal { bbox, score, level });
                }
            }
        }
    }
    let items: Vec<(BoxF, f32)> = cands.iter().map(|p| (p.bbox, p.score)).collect();
    let mut kept: Vec<Proposal> = nms(&items, thr.nms_iou)
        .into_iter()
        .map(|i| cands[i].clone())
        .collect();
    kept.truncate(MAX_PROPOSALS);
    Ok(kept)
}

/// A positive or negative anchor sample for RPN training.
#[derive(Debug, Clone)]
pub struct AnchorSample {
    pub level: usize,
    pub y: usize,
    pub x: usize,
    pub a: usize,
    /// Some(deltas to matched gt) for positives, None for negatives.
    pub target: Option<[f32; 4]>,
}

/// Assign anchors to ground-truth boxes and draw a balanced sample.
///
/// Positive: IoU >= 0.5 with some gt, or being the best anchor for a gt.
/// Negative: max IoU < 0.3. At most 16 positives; negatives fill to 32.
pub fn assign_anchor_targets(
    gt: &[BoxF],
    level_dims: &[(usize, usize); 3],
    rng: &mut ChaCha8Rng,
) -> Vec<AnchorSample> {
    let mut pos: Vec<AnchorSample> = Vec::new();
    let mut neg: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut best_per_gt: Vec<(f64, (usize, usize, usize, usize))> =
        vec![(-1.0, (3, 0, 0, 0)); gt.len()];

    for (li, &(h, w)) in level_dims.iter().enumerate() {
        let level = li + 3;
        for y in 0..h {
            for x in 0..w {
                for a in 0..ANCHORS_PER_CELL {
                    let anchor = anchor_box(level, y, x, a);
                    let mut best = -1.0f64;
                    let mut best_gt = 0usize;
                    for (gi, g) in gt.iter().enumerate() {
                        let iou = box_iou(&anchor, g);
                        if iou > best {
                            best = iou;
                            best_gt = gi;
                        }
                        if iou > best_per_gt[gi].0 {
                            best_per_gt[gi] = (iou, (level, y, x, a));
                        }
                    }
                    if gt.is_empty() || best < 0.3 {
                        neg.push((level, y, x, a));
                    } else if best >= 0.5 {
                        pos.push(AnchorSample {
                            level,
                            y,
                            x,
                            a,
                            target: Some(encode_deltas(&anchor, &gt[best_gt])),
                        });
                    }
                }
            }
        }
    }
    // Force-match each gt's best anchor when it is not already positive.
    for (gi, &(iou, (level, y, x, a))) in best_per_gt.iter().enumerate() {
        if iou <= 0.0 {
            continue;
        }
        if !pos
            .iter()
            .any(|s| (s.level, s.y, s.x, s.a) == (level, y, x, a))
        {
            let anchor = anchor_box(level, y, x, a);
            pos.push(AnchorSample {
                level,
                y,
                x,
                a,
                target: Some(encode_deltas(&anchor, &gt[gi])),
            });
            neg.retain(|&(l, yy, xx, aa)| (l, yy, xx, aa) != (level, y, x, a));
        }
    }

    pos.shuffle(rng);
    pos.truncate(16);
    neg.shuffle(rng);
    let want_neg = 32usize.saturating_sub(pos.len());
    let mut out = pos;
    for &(level, y, x, a) in neg.iter().take(want_neg) {
        out.push(AnchorSample {
            level,
            y,
            x,
            a,
            target: None,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn anchor_sides_scale_with_level() {
        let a = anchor_box(3, 0, 0, 1);
        assert!((a.w() - 32.0).abs() < 1e-9);
        let b = anchor_box(5, 0, 0, 2);
        assert!((b.w() - 256.0).abs() < 1e-9);
        let c = anchor_box(4, 2, 3, 0);
        assert_eq!(c.center(), (3.5 * 16.0, 2.5 * 16.0));
    }

    #[test]
    fn rpn_map_has_fifteen_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let desc = RpnDesc::new("det.rpn", 12);
        let mut params = ParamMap::new();
        desc.init(&mut params, &mut rng);
        let feat = Tensor::randn(&[1, 12, 10, 10], 1.0, &mut rng);
        let cache = desc.forward(&P(&params), &feat).unwrap();
        assert_eq!(cache.map.dims(), &[1, 15, 10, 10]);
    }

    #[test]
    fn anchor_assignment_marks_obvious_positive_and_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // One gt exactly matching a level-3 anchor (scale 1 at cell 5,5).
        let gt = vec![anchor_box(3, 5, 5, 1)];
        let samples = assign_anchor_targets(&gt, &[(20, 20), (10, 10), (5, 5)], &mut rng);
        let pos: Vec<_> = samples.iter().filter(|s| s.target.is_some()).collect();
        let neg: Vec<_> = samples.iter().filter(|s| s.target.is_none()).collect();
        assert!(!pos.is_empty());
        assert!(pos
            .iter()
            .any(|s| (s.level, s.y, s.x, s.a) == (3, 5, 5, 1)));
        // The exactly-matching anchor has zero deltas.
        let exact = pos
            .iter()
            .find(|s| (s.level, s.y, s.x, s.a) == (3, 5, 5, 1))
            .unwrap();
        for d in exact.target.unwrap() {
            assert!(d.abs() < 1e-6);
        }
        assert!(!neg.is_empty());
        assert!(samples.len() <= 32);
    }

    #[test]
    fn empty_gt_yields_only_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples = assign_anchor_targets(&[], &[(4, 4), (2, 2), (1, 1)], &mut rng);
        assert!(!samples.is_empty());
        assert!(samples.iter().all(|s| s.target.is_none()));
    }

    #[test]
    fn proposals_decode_from_a_synthetic_map() {
        // Hand-build maps with one confident anchor and zero deltas.
        let mut maps = vec![
            Tensor::filled(&[1, 15, 20, 20], -10.0),
            Tensor::filled(&[1, 15, 10, 10], -10.0),
            Tensor::filled(&[1, 15, 5, 5], -10.0),
        ];
        // Zero the delta channels so decode returns the anchor itself.
        for m in &mut maps {
            let (_, _, h, w) = m.rank4().unwrap();
            for a in 0..3 {
                for ch in 0..4 {
                    for y in 0..h {
                        for x in 0..w {
                            m.set4(0, delta_channel(a) + ch, y, x, 0.0);
                        }
                    }
                }
            }
        }
        maps[0].set4(0, obj_channel(1), 5, 7, 8.0);
        let thr = DetectThresholds::default();
        let props =
            decode_proposals(&[&maps[0], &maps[1], &maps[2]], &thr, 160, 160).unwrap();
        assert_eq!(props.len(), 1);
        let expect = anchor_box(3, 5, 7, 1);
        assert!((props[0].bbox.x0 - expect.x0).abs() < 1e-6);
        assert!(props[0].score > 0.99);
        assert_eq!(props[0].level, 3);
    }
}
