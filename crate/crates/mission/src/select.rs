//! Target selection and visual servoing on instance masks.

use skyhook_perception::{InstanceDetection, SupportMask};

use crate::MissionError;

/// Proportional servo law: metres per second of lateral command per pixel
/// of centroid offset, with a symmetric clamp.
#[derive(Debug, Clone, Copy)]
pub struct ServoGains {
    pub gain: f64,
    pub clamp: f64,
}

impl Default for ServoGains {
    fn default() -> Self {
        ServoGains { gain: 0.01, clamp: 0.5 }
    }
}

/// Pick the detection whose mask centroid needs the least translation to
/// reach the image centre. Ties go to the larger mask, then the lower
/// index. Scores play no part; selection is purely geometric.
pub fn select_instance(
    detections: &[InstanceDetection],
    image_center: (f64, f64),
) -> Result<usize, MissionError> {
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, det) in detections.iter().enumerate() {
        let Some((cx, cy)) = det.mask.centroid() else {
            continue;
        };
        let d = ((cx - image_center.0).powi(2) + (cy - image_center.1).powi(2)).sqrt();
        let area = det.mask.area();
        let better = match &best {
            None => true,
            Some((bd, barea, _)) => d < *bd || (d == *bd && area > *barea),
        };
        if better {
            best = Some((d, area, i));
        }
    }
    best.map(|(_, _, i)| i).ok_or(MissionError::NoTarget)
}

/// Map the mask centroid's pixel offset from the image centre to a
/// body-frame lateral velocity, component-wise clamped.
pub fn servo_offset(
    mask: &SupportMask,
    image_center: (f64, f64),
    gains: &ServoGains,
) -> Result<(f64, f64), MissionError> {
    let (cx, cy) = mask.mask.centroid().ok_or(MissionError::TargetLost)?;
    let vx = ((cx - image_center.0) * gains.gain).clamp(-gains.clamp, gains.clamp);
    let vy = ((cy - image_center.1) * gains.gain).clamp(-gains.clamp, gains.clamp);
    Ok((vx, vy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use skyhook_perception::{BinMask, BoxF, BrickClass};

    fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinMask {
        let mut m = BinMask::zeros(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
        m
    }

    fn det_with_mask(mask: BinMask, score: f32) -> InstanceDetection {
        InstanceDetection {
            class: BrickClass::Red,
            score,
            bbox: BoxF { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 },
            part_mask: BinMask::zeros(mask.w, mask.h),
            mask,
        }
    }

    #[test]
    fn single_centered_detection_wins() {
        // 4x4 block centred on the 80,80 image centre.
        let dets = vec![det_with_mask(rect_mask(160, 160, 78, 78, 82, 82), 0.9)];
        assert_eq!(select_instance(&dets, (80.0, 80.0)).unwrap(), 0);
    }

    #[test]
    fn nearer_centroid_beats_farther() {
        let near = det_with_mask(rect_mask(160, 160, 98, 78, 102, 82), 0.1);
        let far = det_with_mask(rect_mask(160, 160, 118, 78, 122, 82), 0.99);
        let dets = vec![far, near];
        // Centroids at 120 px and 100 px against centre 80: offsets 40 vs 20.
        assert_eq!(select_instance(&dets, (80.0, 80.0)).unwrap(), 1);
    }

    #[test]
    fn empty_list_is_no_target() {
        assert!(matches!(select_instance(&[], (80.0, 80.0)), Err(MissionError::NoTarget)));
    }

    #[test]
    fn equidistant_tie_goes_to_larger_mask_then_lower_index() {
        // Same centroid distance (20 px left and right), different areas.
        let small = det_with_mask(rect_mask(160, 160, 58, 78, 62, 82), 0.5);
        let large = det_with_mask(rect_mask(160, 160, 96, 72, 104, 88), 0.5);
        assert_eq!(select_instance(&[small.clone(), large.clone()], (80.0, 80.0)).unwrap(), 1);
        // Identical geometry mirrored: lower index wins.
        let twin_a = det_with_mask(rect_mask(160, 160, 58, 78, 62, 82), 0.5);
        let twin_b = det_with_mask(rect_mask(160, 160, 98, 78, 102, 82), 0.5);
        assert_eq!(select_instance(&[twin_a, twin_b], (80.0, 80.0)).unwrap(), 0);
        let _ = (small, large);
    }

    #[test]
    fn servo_centered_mask_is_zero() {
        let m = SupportMask::new(rect_mask(160, 160, 78, 78, 82, 82), 0);
        let (vx, vy) = servo_offset(&m, (80.0, 80.0), &ServoGains::default()).unwrap();
        assert_eq!((vx, vy), (0.0, 0.0));
    }

    #[test]
    fn servo_thirty_px_right_at_centi_gain_is_point_three() {
        let m = SupportMask::new(rect_mask(160, 160, 108, 78, 112, 82), 0);
        let gains = ServoGains { gain: 0.01, clamp: 1.0 };
        let (vx, vy) = servo_offset(&m, (80.0, 80.0), &gains).unwrap();
        assert!((vx - 0.3).abs() < 1e-12);
        assert_eq!(vy, 0.0);
    }

    #[test]
    fn servo_empty_mask_is_target_lost() {
        let m = SupportMask::new(BinMask::zeros(160, 160), 0);
        assert!(matches!(
            servo_offset(&m, (80.0, 80.0), &ServoGains::default()),
            Err(MissionError::TargetLost)
        ));
    }

    #[test]
    fn servo_clamps_large_offsets() {
        let m = SupportMask::new(rect_mask(160, 160, 150, 150, 158, 158), 0);
        let gains = ServoGains { gain: 0.01, clamp: 0.25 };
        let (vx, vy) = servo_offset(&m, (80.0, 80.0), &gains).unwrap();
        assert_eq!((vx, vy), (0.25, 0.25));
    }

    proptest! {
        // Selection depends only on mask geometry, never on scores.
        #[test]
        fn selection_invariant_under_score_scaling(scale in 0.01f32..100.0, seed in 0u64..50) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut dets = Vec::new();
            for _ in 0..rng.gen_range(1..6) {
                let x0 = rng.gen_range(0..150);
                let y0 = rng.gen_range(0..150);
                let w = rng.gen_range(2..10);
                let h = rng.gen_range(2..10);
                let mask = rect_mask(160, 160, x0, y0, (x0 + w).min(160), (y0 + h).min(160));
                dets.push(det_with_mask(mask, rng.gen_range(0.1..1.0)));
            }
            let before = select_instance(&dets, (80.0, 80.0)).unwrap();
            let mut scaled = dets.clone();
            for d in &mut scaled {
                d.score *= scale;
            }
            prop_assert_eq!(select_instance(&scaled, (80.0, 80.0)).unwrap(), before);
        }
    }
}
