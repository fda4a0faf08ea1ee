//! Sample assembly between the dataset on disk and the training losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyhook_nn::Tensor;
use skyhook_perception::train::GtInstance;
use skyhook_perception::{BinMask, BoxF, BrickClass};
use skyhook_scenegen::{
    augment, bbox_from_mask, AugOp, DetSample, SceneAnnotation, SceneInstance, TrackFrame,
};

/// Scene annotation instances as detector ground truth.
pub fn gt_instances(ann: &SceneAnnotation) -> Vec<GtInstance> {
    ann.instances
        .iter()
        .map(|inst| GtInstance {
            class: inst.class,
            bbox: BoxF::from_inclusive((
                inst.bbox[0] as usize,
                inst.bbox[1] as usize,
                inst.bbox[2] as usize,
                inst.bbox[3] as usize,
            )),
            mask: inst.mask.clone(),
            part_mask: inst.part_mask.clone(),
        })
        .collect()
}

/// One augmented detector sample. Augmentation can in rare cases push every
/// instance out of frame; the unaugmented original is the fallback so the
/// loss always sees at least one ground truth.
pub fn draw_detector_sample(
    pool: &[DetSample],
    ops: &[AugOp],
    rng: &mut ChaCha8Rng,
) -> (Tensor, Vec<GtInstance>) {
    let s = &pool[rng.gen_range(0..pool.len())];
    let (img, ann) = augment(&s.image, &s.annotation, ops, rng);
    if ann.instances.is_empty() {
        return (s.image.clone(), gt_instances(&s.annotation));
    }
    (img, gt_instances(&ann))
}

/// A tracker pair as (previous image, current image, support mask, target
/// mask). `static_prob` is the chance of replacing the consecutive-frame
/// pair with an identical-frame pair, which anchors the tracker's identity
/// mapping.
pub struct TrackPair {
    pub prev: Tensor,
    pub cur: Tensor,
    pub prev_mask: BinMask,
    pub gt_mask: BinMask,
}

fn frame_annotation(mask: &BinMask) -> Option<SceneAnnotation> {
    let bbox = bbox_from_mask(mask).ok()?;
    Some(SceneAnnotation {
        w: mask.w,
        h: mask.h,
        instances: vec![SceneInstance {
            class: BrickClass::Red,
            mask: mask.clone(),
            part_mask: BinMask::zeros(mask.w, mask.h),
            bbox,
            occlusion_index: 0,
        }],
    })
}

/// Geometric and photometric augmentation applied identically to both
/// frames of a pair: each frame runs through `augment` with its own clone of
/// the same freshly seeded RNG, so every parameter draw matches.
fn augment_pair(
    prev: (&Tensor, &BinMask),
    cur: (&Tensor, &BinMask),
    ops: &[AugOp],
    rng: &mut ChaCha8Rng,
) -> Option<TrackPair> {
    let ops: Vec<AugOp> = ops
        .iter()
        .copied()
        .filter(|o| *o != AugOp::SyntheticScenes)
        .collect();
    let pair_seed = rng.gen::<u64>();
    let prev_ann = frame_annotation(prev.1)?;
    let cur_ann = frame_annotation(cur.1)?;
    let mut rng_a = ChaCha8Rng::seed_from_u64(pair_seed);
    let mut rng_b = ChaCha8Rng::seed_from_u64(pair_seed);
    let (prev_img, prev_out) = augment(prev.0, &prev_ann, &ops, &mut rng_a);
    let (cur_img, cur_out) = augment(cur.0, &cur_ann, &ops, &mut rng_b);
    let prev_inst = prev_out.instances.first()?;
    let cur_inst = cur_out.instances.first()?;
    Some(TrackPair {
        prev: prev_img,
        cur: cur_img,
        prev_mask: prev_inst.mask.clone(),
        gt_mask: cur_inst.mask.clone(),
    })
}

pub fn draw_track_pair(
    seqs: &[Vec<TrackFrame>],
    ops: &[AugOp],
    static_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Option<TrackPair> {
    for _ in 0..12 {
        let seq = &seqs[rng.gen_range(0..seqs.len())];
        let (a, b) = if seq.len() < 2 || rng.gen_bool(static_prob) {
            let i = rng.gen_range(0..seq.len());
            (&seq[i], &seq[i])
        } else {
            let i = rng.gen_range(0..seq.len() - 1);
            (&seq[i], &seq[i + 1])
        };
        if a.mask.area() == 0 || b.mask.area() == 0 {
            continue;
        }
        if let Some(p) = augment_pair(
            (&a.image, &a.mask),
            (&b.image, &b.mask),
            ops,
            rng,
        ) {
            return Some(p);
        }
        return Some(TrackPair {
            prev: a.image.clone(),
            cur: b.image.clone(),
            prev_mask: a.mask.clone(),
            gt_mask: b.mask.clone(),
        });
    }
    None
}
