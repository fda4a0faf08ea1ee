//! Box geometry: IoU, NMS, delta coding, ROI-align.

use skyhook_nn::Tensor;

use crate::types::BoxF;
use crate::{PerceptionError, Result};

/// Intersection over union of two continuous boxes.
pub fn box_iou(a: &BoxF, b: &BoxF) -> f64 {
    let ix = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let iy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy non-maximum suppression. `items` are (box, score); returns indices
/// of the kept items. Candidates are visited by descending score, ties broken
/// by ascending index; a candidate is suppressed when its IoU with any kept
/// box exceeds `iou_thr`.
pub fn nms(items: &[(BoxF, f32)], iou_thr: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b].1
            .partial_cmp(&items[a].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept
            .iter()
            .all(|&k| box_iou(&items[i].0, &items[k].0) <= iou_thr)
        {
            kept.push(i);
        }
    }
    kept
}

/// Encode the offset from an anchor/ROI to a target box as (tx, ty, tw, th).
pub fn encode_deltas(anchor: &BoxF, target: &BoxF) -> [f32; 4] {
    let (acx, acy) = anchor.center();
    let (tcx, tcy) = target.center();
    let aw = anchor.w().max(1e-6);
    let ah = anchor.h().max(1e-6);
    [
        ((tcx - acx) / aw) as f32,
        ((tcy - acy) / ah) as f32,
        (target.w().max(1e-6) / aw).ln() as f32,
        (target.h().max(1e-6) / ah).ln() as f32,
    ]
}

/// Apply (tx, ty, tw, th) to an anchor/ROI. Log-scale terms are clamped to
/// +-4 so a wild regression output cannot overflow.
pub fn decode_deltas(anchor: &BoxF, d: [f32; 4]) -> BoxF {
    let (acx, acy) = anchor.center();
    let aw = anchor.w().max(1e-6);
    let ah = anchor.h().max(1e-6);
    let cx = acx + d[0] as f64 * aw;
    let cy = acy + d[1] as f64 * ah;
    let w = aw * (d[2] as f64).clamp(-4.0, 4.0).exp();
    let h = ah * (d[3] as f64).clamp(-4.0, 4.0).exp();
    BoxF::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
}

/// Pyramid level (3..=5) an ROI pools from, by box scale.
pub fn roi_level(b: &BoxF) -> usize {
    let side = b.area().sqrt();
    if side < 48.0 {
        3
    } else if side < 96.0 {
        4
    } else {
        5
    }
}

fn bilinear_taps(coord: f64, extent: usize) -> (usize, usize, f64) {
    let c = coord.clamp(0.0, (extent - 1) as f64);
    let lo = c.floor() as usize;
    let hi = (lo + 1).min(extent - 1);
    (lo, hi, c - lo as f64)
}

/// ROI-align with one bilinear sample per output bin (at the bin center).
///
/// `feat` is `[1, C, H, W]` at `stride` image pixels per feature cell; `b` is
/// in image coordinates. Output is `[1, C, out, out]`. A zero-area box is a
/// `BoxError`.
pub fn roi_align(feat: &Tensor, b: &BoxF, out: usize, stride: f64) -> Result<Tensor> {
    if b.w() <= 0.0 || b.h() <= 0.0 {
        return Err(PerceptionError::Box(format!(
            "degenerate roi {:.3},{:.3},{:.3},{:.3}",
            b.x0, b.y0, b.x1, b.y1
        )));
    }
    let (_, c, h, w) = feat.rank4()?;
    let prec = feat.precision();
    let mut outt = Tensor::zeros(&[1, c, out, out]).with_precision(prec);
    let d = feat.data();
    let od = outt.data_mut();
    for oy in 0..out {
        let y_img = b.y0 + (oy as f64 + 0.5) / out as f64 * b.h();
        let (ylo, yhi, ty) = bilinear_taps(y_img / stride - 0.5, h);
        for ox in 0..out {
            let x_img = b.x0 + (ox as f64 + 0.5) / out as f64 * b.w();
            let (xlo, xhi, tx) = bilinear_taps(x_img / stride - 0.5, w);
            for ch in 0..c {
                let plane = &d[ch * h * w..][..h * w];
                let v00 = plane[ylo * w + xlo] as f64;
                let v01 = plane[ylo * w + xhi] as f64;
                let v10 = plane[yhi * w + xlo] as f64;
                let v11 = plane[yhi * w + xhi] as f64;
                let v = v00 * (1.0 - ty) * (1.0 - tx)
                    + v01 * (1.0 - ty) * tx
                    + v10 * ty * (1.0 - tx)
                    + v11 * ty * tx;
                od[ch * out * out + oy * out + ox] = prec.quantize(v as f32);
            }
        }
    }
    Ok(outt)
}

/// Adjoint of [`roi_align`]: scatter output gradients back to the feature map.
pub fn roi_align_backward(
    feat_dims: &[usize],
    b: &BoxF,
    out: usize,
    stride: f64,
    grad: &Tensor,
) -> Result<Tensor> {
    let (c, h, w) = (feat_dims[1], feat_dims[2], feat_dims[3]);
    let mut d_feat = Tensor::zeros(feat_dims);
    let g = grad.data();
    let dd = d_feat.data_mut();
    for oy in 0..out {
        let y_img = b.y0 + (oy as f64 + 0.5) / out as f64 * b.h();
        let (ylo, yhi, ty) = bilinear_taps(y_img / stride - 0.5, h);
        for ox in 0..out {
            let x_img = b.x0 + (ox as f64 + 0.5) / out as f64 * b.w();
            let (xlo, xhi, tx) = bilinear_taps(x_img / stride - 0.5, w);
            for ch in 0..c {
                let gv = g[ch * out * out + oy * out + ox];
                let plane = &mut dd[ch * h * w..][..h * w];
                plane[ylo * w + xlo] += gv * ((1.0 - ty) * (1.0 - tx)) as f32;
                plane[ylo * w + xhi] += gv * ((1.0 - ty) * tx) as f32;
                plane[yhi * w + xlo] += gv * (ty * (1.0 - tx)) as f32;
                plane[yhi * w + xhi] += gv * (ty * tx) as f32;
            }
        }
    }
    Ok(d_feat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_unit_overlap() {
        let a = BoxF::new(0.0, 0.0, 2.0, 2.0);
        let b = BoxF::new(1.0, 0.0, 3.0, 2.0);
        assert!((box_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(box_iou(&a, &BoxF::new(5.0, 5.0, 6.0, 6.0)), 0.0);
    }

    #[test]
    fn nms_keeps_best_of_overlapping_pair() {
        let items = vec![
            (BoxF::new(0.0, 0.0, 10.0, 10.0), 0.9),
            (BoxF::new(1.0, 1.0, 11.0, 11.0), 0.8),
            (BoxF::new(30.0, 30.0, 40.0, 40.0), 0.7),
        ];
        assert_eq!(nms(&items, 0.5), vec![0, 2]);
    }

    #[test]
    fn nms_tie_breaks_by_index() {
        let items = vec![
            (BoxF::new(0.0, 0.0, 10.0, 10.0), 0.5),
            (BoxF::new(0.0, 0.0, 10.0, 10.0), 0.5),
        ];
        assert_eq!(nms(&items, 0.5), vec![0]);
    }

    #[test]
    fn delta_coding_round_trips() {
        let anchor = BoxF::new(10.0, 20.0, 42.0, 52.0);
        let target = BoxF::new(12.0, 18.0, 50.0, 49.0);
        let d = encode_deltas(&anchor, &target);
        let back = decode_deltas(&anchor, d);
        for (a, b) in [
            (back.x0, target.x0),
            (back.y0, target.y0),
            (back.x1, target.x1),
            (back.y1, target.y1),
        ] {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn roi_align_over_constant_field_is_constant() {
        let feat = Tensor::filled(&[1, 2, 6, 6], 3.25);
        let b = BoxF::new(3.0, 5.0, 29.0, 17.0);
        let out = roi_align(&feat, &b, 7, 8.0).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn roi_align_full_box_over_2x2_single_bin_averages() {
        let feat = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = BoxF::new(0.0, 0.0, 2.0, 2.0);
        let out = roi_align(&feat, &b, 1, 1.0).unwrap();
        assert_eq!(out.data(), &[2.5]);
    }

    #[test]
    fn roi_align_exact_cell_returns_cell_value() {
        let mut feat = Tensor::zeros(&[1, 1, 4, 4]);
        feat.set4(0, 0, 2, 1, 7.5);
        // Cell (x=1, y=2) at stride 8 covers image [8,16) x [16,24).
        let b = BoxF::new(8.0, 16.0, 16.0, 24.0);
        let out = roi_align(&feat, &b, 1, 8.0).unwrap();
        assert_eq!(out.data(), &[7.5]);
    }

    #[test]
    fn degenerate_box_is_a_box_error() {
        let feat = Tensor::zeros(&[1, 1, 4, 4]);
        let b = BoxF::new(5.0, 5.0, 5.0, 9.0);
        assert!(matches!(
            roi_align(&feat, &b, 7, 8.0),
            Err(PerceptionError::Box(_))
        ));
    }

    #[test]
    fn roi_align_adjoint_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let feat = Tensor::randn(&[1, 3, 6, 6], 1.0, &mut rng);
        let b = BoxF::new(4.0, 2.0, 30.0, 41.0);
        let y = Tensor::randn(&[1, 3, 7, 7], 1.0, &mut rng);
        let fx = roi_align(&feat, &b, 7, 8.0).unwrap();
        let aty = roi_align_backward(&[1, 3, 6, 6], &b, 7, 8.0, &y).unwrap();
        let lhs: f64 = fx
            .data()
            .iter()
            .zip(y.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let rhs: f64 = aty
            .data()
            .iter()
            .zip(feat.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        assert!((lhs - rhs).abs() < 1e-3 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn roi_levels_by_scale() {
        assert_eq!(roi_level(&BoxF::new(0.0, 0.0, 20.0, 20.0)), 3);
        assert_eq!(roi_level(&BoxF::new(0.0, 0.0, 60.0, 60.0)), 4);
        assert_eq!(roi_level(&BoxF::new(0.0, 0.0, 120.0, 120.0)), 5);
    }
}
