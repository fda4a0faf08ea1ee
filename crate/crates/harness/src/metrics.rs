//! mIoU with greedy max-IoU matching, plus plain classification accuracy.
//!
//! Matching is threshold-free: candidate pairs are sorted by descending IoU
//! and consumed greedily, so every ground truth grabs the best prediction
//! still available. Unmatched items on either side score zero, which makes
//! the mean penalize both misses and spurious predictions.

use skyhook_perception::{box_iou, BinMask, BoxF};

/// Greedy matching over a dense IoU table. Returns (sum of matched IoUs,
/// denominator). The sort key is invariant under swapping the two argument
/// lists, which keeps the score symmetric even through exact IoU ties.
fn greedy_match(n_a: usize, n_b: usize, iou: impl Fn(usize, usize) -> f64) -> (f64, usize) {
    let denom = n_a.max(n_b);
    if n_a == 0 || n_b == 0 {
        return (0.0, denom);
    }
    let mut pairs = Vec::with_capacity(n_a * n_b);
    for i in 0..n_a {
        for j in 0..n_b {
            pairs.push((iou(i, j), i, j));
        }
    }
    pairs.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then_with(|| (x.1.min(x.2)).cmp(&(y.1.min(y.2))))
            .then_with(|| (x.1.max(x.2)).cmp(&(y.1.max(y.2))))
            .then_with(|| (x.1, x.2).cmp(&(y.1, y.2)))
    });
    let mut used_a = vec![false; n_a];
    let mut used_b = vec![false; n_b];
    let mut sum = 0.0;
    for (v, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            sum += v;
        }
    }
    (sum, denom)
}

/// Sum/denominator form of box mIoU, for pooling across many images.
pub fn miou_boxes_parts(preds: &[BoxF], gts: &[BoxF]) -> (f64, usize) {
    greedy_match(preds.len(), gts.len(), |i, j| box_iou(&preds[i], &gts[j]))
}

/// Sum/denominator form of mask mIoU, for pooling across many images.
pub fn miou_masks_parts(preds: &[BinMask], gts: &[BinMask]) -> (f64, usize) {
    greedy_match(preds.len(), gts.len(), |i, j| preds[i].iou(&gts[j]))
}

fn finish(sum: f64, denom: usize) -> f64 {
    if denom == 0 {
        1.0
    } else {
        sum / denom as f64
    }
}

/// Mean IoU over greedily matched prediction/ground-truth box pairs.
/// Both sets empty is defined as 1.0; empty ground truth with any
/// predictions is 0.0.
pub fn miou_boxes(preds: &[BoxF], gts: &[BoxF]) -> f64 {
    let (s, d) = miou_boxes_parts(preds, gts);
    finish(s, d)
}

/// Mean IoU over greedily matched prediction/ground-truth mask pairs.
pub fn miou_masks(preds: &[BinMask], gts: &[BinMask]) -> f64 {
    let (s, d) = miou_masks_parts(preds, gts);
    finish(s, d)
}

/// Fraction of correct predictions; 1.0 on empty input.
pub fn accuracy(correct: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        correct as f64 / total as f64
    }
}
