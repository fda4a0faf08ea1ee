//! The unified multi-task model: descriptors, parameters, inference paths,
//! and cost accounting against isolated single-task baselines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skyhook_nn::{resize_bilinear, softmax, Precision, Tensor};

use crate::arch::{channel_table, Arch, ChannelTable};
use crate::backbone::BackboneDesc;
use crate::fpn::FpnDesc;
use crate::heads::{paste_mask, BoxHeadDesc, MaskHeadDesc, BOX_POOL, MASK_POOL, NUM_CLASSES};
use crate::layers::{global_avg_pool, relu_t, ConvDesc, LinearDesc, ParamMap, P};
use crate::roi::{decode_deltas, nms, roi_align, roi_level};
use crate::rpn::{decode_proposals, RpnDesc};
use crate::track::{finalize_mask, fuse_stages, head_desc, TrackOutcome};
use crate::types::{
    BinMask, BoxF, BrickClass, DetectThresholds, GraspStateReading, InstanceDetection, SupportMask,
};
use crate::{PerceptionError, Result};

/// ROI budget used for MAC accounting (actual counts vary per image).
pub const NOMINAL_ROIS: usize = 8;
/// Cap on emitted detections per image.
pub const MAX_DETECTIONS: usize = 32;
/// Gripper crop side in pixels.
pub const GRASP_CROP: usize = 64;

/// Full set of layer descriptors for one architecture. Holds no weights.
#[derive(Debug, Clone)]
pub struct ModelDesc {
    pub table: ChannelTable,
    pub c1: BackboneDesc,
    pub c2: BackboneDesc,
    pub c3: BackboneDesc,
    pub det_fpn: FpnDesc,
    pub rpn: RpnDesc,
    pub box_head: BoxHeadDesc,
    pub mask_head: MaskHeadDesc,
    pub part_head: MaskHeadDesc,
    pub trk_fpn: FpnDesc,
    pub trk_head: ConvDesc,
    pub grasp_conv: ConvDesc,
    pub grasp_foam: LinearDesc,
    pub grasp_attach: LinearDesc,
}

impl ModelDesc {
    pub fn new(arch: Arch) -> Self {
        Self::with_table(channel_table(arch))
    }

    pub fn with_table(table: ChannelTable) -> Self {
        let c1 = BackboneDesc::new("c1", 3, table.c1);
        let c2 = BackboneDesc::new("c2", 1, table.c2);
        let c3 = BackboneDesc::new("c3", 3, table.c3);
        let det_in = [table.c1[2], table.c1[3], table.c1[4]];
        let det_fpn = FpnDesc::new("det.fpn", det_in, table.det_width);
        let rpn = RpnDesc::new("det.rpn", table.det_width);
        let box_head = BoxHeadDesc::new("det.box", table.det_width);
        let mask_head = MaskHeadDesc::new("det.mask", table.det_width);
        let part_head = MaskHeadDesc::new("det.part", table.det_width);
        let trk_in = crate::track::concat_channels_per_level(&table.c1, &table.c2);
        let trk_fpn = FpnDesc::new("trk.fpn", trk_in, table.trk_width);
        let trk_head = head_desc("trk", table.trk_width);
        let grasp_conv = ConvDesc::new("grasp.conv", table.c3[4], table.grasp_width, 3, 1, 1);
        let grasp_foam = LinearDesc::new("grasp.foam", table.grasp_width, 2);
        let grasp_attach = LinearDesc::new("grasp.attach", table.grasp_width, 2);
        ModelDesc {
            table,
            c1,
            c2,
            c3,
            det_fpn,
            rpn,
            box_head,
            mask_head,
            part_head,
            trk_fpn,
            trk_head,
            grasp_conv,
            grasp_foam,
            grasp_attach,
        }
    }

    pub fn init(&self, seed: u64) -> ParamMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamMap::new();
        self.c1.init(&mut params, &mut rng);
        self.c2.init(&mut params, &mut rng);
        self.c3.init(&mut params, &mut rng);
        self.det_fpn.init(&mut params, &mut rng);
        self.rpn.init(&mut params, &mut rng);
        self.box_head.init(&mut params, &mut rng);
        self.mask_head.init(&mut params, &mut rng);
        self.part_head.init(&mut params, &mut rng);
        self.trk_fpn.init(&mut params, &mut rng);
        self.trk_head.init(&mut params, &mut rng);
        self.grasp_conv.init(&mut params, &mut rng);
        self.grasp_foam.init(&mut params, &mut rng);
        self.grasp_attach.init(&mut params, &mut rng);
        params
    }

    /// Total trainable parameter count of the unified model.
    pub fn param_count(&self) -> usize {
        self.c1.param_count()
            + self.c2.param_count()
            + self.c3.param_count()
            + self.det_fpn.param_count()
            + self.rpn.param_count()
            + self.box_head.param_count()
            + self.mask_head.param_count()
            + self.part_head.param_count()
            + self.trk_fpn.param_count()
            + self.trk_head.param_count()
            + self.grasp_conv.param_count()
            + self.grasp_foam.param_count()
            + self.grasp_attach.param_count()
    }

    /// Conv/linear MACs for one steady-state multi-task tick at `res`
    /// (previous-frame features cached) plus one gripper classification.
    pub fn unified_macs(&self, res: usize) -> u64 {
        let h3 = res / 8;
        self.c1.macs(res, res)
            + self.c2.macs(res, res)
            + self.det_fpn.macs(h3, h3)
            + self.rpn.macs(h3, h3)
            + NOMINAL_ROIS as u64
                * (self.box_head.macs_per_roi()
                    + self.mask_head.macs_per_roi()
                    + self.part_head.macs_per_roi())
            + self.trk_fpn.macs(h3, h3)
            + self.trk_head.macs(h3 * 2, h3 * 2)
            + self.grasp_macs()
    }

    pub fn grasp_macs(&self) -> u64 {
        let g5 = GRASP_CROP / 32;
        self.c3.macs(GRASP_CROP, GRASP_CROP)
            + self.grasp_conv.macs(g5, g5)
            + self.grasp_foam.macs()
            + self.grasp_attach.macs()
    }

    /// Parameter counts of the three isolated single-task networks
    /// (detection+instance-seg, part-seg, tracker), each with its own
    /// backbone and pyramid sized identically to the unified model's.
    pub fn isolated_param_counts(&self) -> [usize; 3] {
        let det_common = self.c1.param_count()
            + self.det_fpn.param_count()
            + self.rpn.param_count()
            + self.box_head.param_count();
        [
            det_common + self.mask_head.param_count(),
            det_common + self.part_head.param_count(),
            self.c1.param_count()
                + self.c2.param_count()
                + self.trk_fpn.param_count()
                + self.trk_head.param_count(),
        ]
    }

    /// Per-tick MACs of the isolated networks under the same conventions as
    /// [`Self::unified_macs`] (steady-state feature caching for the tracker).
    pub fn isolated_macs(&self, res: usize) -> [u64; 3] {
        let h3 = res / 8;
        let det_common = self.c1.macs(res, res)
            + self.det_fpn.macs(h3, h3)
            + self.rpn.macs(h3, h3)
            + NOMINAL_ROIS as u64 * self.box_head.macs_per_roi();
        [
            det_common + NOMINAL_ROIS as u64 * self.mask_head.macs_per_roi(),
            det_common + NOMINAL_ROIS as u64 * self.part_head.macs_per_roi(),
            self.c1.macs(res, res)
                + self.c2.macs(res, res)
                + self.trk_fpn.macs(h3, h3)
                + self.trk_head.macs(h3 * 2, h3 * 2),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelCost {
    pub params: usize,
    pub macs: u64,
}

/// Cached backbone features of one frame.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub stages: Vec<Tensor>,
    pub img_w: usize,
    pub img_h: usize,
}

/// The unified perception model: descriptors + weights + readiness.
#[derive(Debug)]
pub struct UnifiedModel {
    pub arch: Arch,
    pub desc: ModelDesc,
    pub params: ParamMap,
    pub precision: Precision,
    ready: bool,
}

impl UnifiedModel {
    /// Fresh random initialization. The model is NOT ready for inference
    /// until it is trained or loaded from a checkpoint.
    pub fn new(arch: Arch, seed: u64) -> Self {
        let desc = ModelDesc::new(arch);
        let params = desc.init(seed);
        UnifiedModel {
            arch,
            desc,
            params,
            precision: Precision::Fp32,
            ready: false,
        }
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    pub fn mark_ready(&mut self) {
        self.ready = true;
    }

    fn check_ready(&self) -> Result<()> {
        if self.ready {
            Ok(())
        } else {
            Err(PerceptionError::NotReady)
        }
    }

    /// Cast all weights to the given precision; inference then runs on that
    /// grid end to end. Training requires Fp32.
    pub fn set_precision(&mut self, p: Precision) {
        if p == self.precision {
            return;
        }
        for t in self.params.values_mut() {
            *t = t.cast(p);
        }
        self.precision = p;
    }

    fn prepare(&self, img: &Tensor) -> Tensor {
        if img.precision() == self.precision {
            img.clone()
        } else {
            img.cast(self.precision)
        }
    }

    pub fn cost(&self, res: usize) -> ModelCost {
        ModelCost {
            params: self.desc.param_count(),
            macs: self.desc.unified_macs(res),
        }
    }

    /// Scene-backbone features for one frame.
    pub fn backbone_features(&self, img: &Tensor) -> Result<FrameFeatures> {
        let x = self.prepare(img);
        let (_, _, h, w) = x.rank4()?;
        let stages = self.desc.c1.forward(&P(&self.params), &x)?;
        Ok(FrameFeatures {
            stages,
            img_w: w,
            img_h: h,
        })
    }

    /// Detect brick instances in one image.
    pub fn detect(&self, img: &Tensor) -> Result<Vec<InstanceDetection>> {
        self.detect_opts(img, &DetectThresholds::default())
    }

    pub fn detect_opts(
        &self,
        img: &Tensor,
        thr: &DetectThresholds,
    ) -> Result<Vec<InstanceDetection>> {
        self.check_ready()?;
        let feats = self.backbone_features(img)?;
        self.detect_from_features(&feats, thr, true, true)
    }

    /// Detection pipeline from cached features. `with_mask` / `with_part`
    /// select which mask heads run (both on in the unified tick; isolated
    /// baselines run one each).
    pub fn detect_from_features(
        &self,
        feats: &FrameFeatures,
        thr: &DetectThresholds,
        with_mask: bool,
        with_part: bool,
    ) -> Result<Vec<InstanceDetection>> {
        self.check_ready()?;
        let p = P(&self.params);
        let (pyr, _) = self.desc.det_fpn.forward(
            &p,
            &feats.stages[2],
            &feats.stages[3],
            &feats.stages[4],
        )?;
        let maps = [
            self.desc.rpn.forward(&p, &pyr[0])?.map,
            self.desc.rpn.forward(&p, &pyr[1])?.map,
            self.desc.rpn.forward(&p, &pyr[2])?.map,
        ];
        let proposals = decode_proposals(
            &[&maps[0], &maps[1], &maps[2]],
            thr,
            feats.img_w,
            feats.img_h,
        )?;
        if proposals.is_empty() {
            return Ok(Vec::new());
        }

        // Stack 7x7 crops and run the box head once.
        let w = self.desc.table.det_width;
        let n = proposals.len();
        let mut crops = Tensor::zeros(&[n, w, BOX_POOL, BOX_POOL]).with_precision(self.precision);
        for (i, prop) in proposals.iter().enumerate() {
            let level = roi_level(&prop.bbox);
            let crop = roi_align(
                &pyr[level - 3],
                &prop.bbox,
                BOX_POOL,
                crate::rpn::level_stride(level),
            )?;
            let dst = &mut crops.data_mut()[i * w * BOX_POOL * BOX_POOL..][..w * BOX_POOL * BOX_POOL];
            dst.copy_from_slice(crop.data());
        }
        let (cls_logits, regs, _) = self.desc.box_head.forward(&p, &crops)?;

        // Refine, score, class-wise NMS.
        struct Cand {
            class: BrickClass,
            score: f32,
            bbox: BoxF,
        }
        let mut cands: Vec<Cand> = Vec::new();
        for i in 0..n {
            let mut logits: Vec<f32> = (0..NUM_CLASSES)
                .map(|k| cls_logits.data()[i * NUM_CLASSES + k])
                .collect();
            softmax(&mut logits);
            let (best, &score) = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .unwrap();
            if best == 0 || score < thr.class_score {
                continue;
            }
            let d = [
                regs.data()[i * 4],
                regs.data()[i * 4 + 1],
                regs.data()[i * 4 + 2],
                regs.data()[i * 4 + 3],
            ];
            let refined = decode_deltas(&proposals[i].bbox, d)
                .clip(feats.img_w as f64, feats.img_h as f64);
            if refined.w() < 1.0 || refined.h() < 1.0 {
                continue;
            }
            cands.push(Cand {
                class: BrickClass::from_id(best).unwrap(),
                score,
                bbox: refined,
            });
        }
        let mut survivors: Vec<&Cand> = Vec::new();
        for class in BrickClass::ALL {
            let of_class: Vec<&Cand> = cands.iter().filter(|c| c.class == class).collect();
            let items: Vec<(BoxF, f32)> = of_class.iter().map(|c| (c.bbox, c.score)).collect();
            for k in nms(&items, thr.nms_iou) {
                survivors.push(of_class[k]);
            }
        }
        survivors.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        survivors.truncate(MAX_DETECTIONS);

        // Mask heads on refined boxes.
        let mut out = Vec::with_capacity(survivors.len());
        for c in survivors {
            let level = roi_level(&c.bbox);
            let crop14 = roi_align(
                &pyr[level - 3],
                &c.bbox,
                MASK_POOL,
                crate::rpn::level_stride(level),
            )?;
            let crop14 = crop14.reshape(&[1, w, MASK_POOL, MASK_POOL])?;
            let empty = BinMask::zeros(feats.img_w, feats.img_h);
            let (mask, inst_bin14) = if with_mask {
                let (logits, _) = self.desc.mask_head.forward(&p, &crop14)?;
                let probs: Vec<f32> = logits
                    .data()
                    .iter()
                    .map(|&v| skyhook_nn::sigmoid(v))
                    .collect();
                let bin: Vec<f32> = probs.iter().map(|&v| (v >= 0.5) as u8 as f32).collect();
                (
                    paste_mask(&probs, MASK_POOL, &c.bbox, feats.img_w, feats.img_h),
                    bin,
                )
            } else {
                (empty.clone(), vec![1.0; MASK_POOL * MASK_POOL])
            };
            let part_mask = if with_part {
                let (logits, _) = self.desc.part_head.forward(&p, &crop14)?;
                let probs: Vec<f32> = logits
                    .data()
                    .iter()
                    .zip(&inst_bin14)
                    .map(|(&v, &b)| skyhook_nn::sigmoid(v) * b)
                    .collect();
                let mut pm = paste_mask(&probs, MASK_POOL, &c.bbox, feats.img_w, feats.img_h);
                if with_mask {
                    for (pv, mv) in pm.data.iter_mut().zip(&mask.data) {
                        *pv &= *mv;
                    }
                }
                pm
            } else {
                empty
            };
            out.push(InstanceDetection {
                class: c.class,
                score: c.score,
                bbox: c.bbox,
                mask,
                part_mask,
            });
        }
        Ok(out)
    }

    /// Track the support mask from the previous frame into the current one.
    pub fn track(
        &self,
        cur: &Tensor,
        prev: &Tensor,
        prev_mask: &SupportMask,
    ) -> Result<TrackOutcome> {
        self.check_ready()?;
        let cur_f = self.backbone_features(cur)?;
        let prev_f = self.backbone_features(prev)?;
        self.track_from_features(&cur_f, &prev_f, prev_mask)
    }

    pub fn track_from_features(
        &self,
        cur: &FrameFeatures,
        prev: &FrameFeatures,
        prev_mask: &SupportMask,
    ) -> Result<TrackOutcome> {
        self.check_ready()?;
        let p = P(&self.params);
        let m = self.prepare(&prev_mask.mask.to_tensor());
        let m_stages = self.desc.c2.forward(&p, &m)?;
        let fused = fuse_stages(&cur.stages, &prev.stages, &m_stages)?;
        let (tpyr, _) = self.desc.trk_fpn.forward(&p, &fused[0], &fused[1], &fused[2])?;
        let (_, _, h3, w3) = tpyr[0].rank4()?;
        let up = resize_bilinear(&tpyr[0], h3 * 2, w3 * 2)?;
        let logits = self.desc.trk_head.fwd(&p, &up)?;
        finalize_mask(&logits, cur.img_w, cur.img_h, prev_mask.t + 1)
    }

    /// Gripper-state classification from a 3x64x64 wrist-camera crop.
    ///
    /// Probabilities are computed in f32 from the (possibly FP16-quantized)
    /// head logits, so each pair sums to 1 within float rounding.
    pub fn classify_grasp(&self, crop: &Tensor) -> Result<GraspStateReading> {
        self.check_ready()?;
        let (n, c, h, w) = crop.rank4()?;
        if n != 1 || c != 3 || h != GRASP_CROP || w != GRASP_CROP {
            return Err(PerceptionError::Shape(format!(
                "grasp crop must be [1,3,{GRASP_CROP},{GRASP_CROP}], got {:?}",
                crop.dims()
            )));
        }
        let x = self.prepare(crop);
        let p = P(&self.params);
        let stages = self.desc.c3.forward(&p, &x)?;
        let head = relu_t(&self.desc.grasp_conv.fwd(&p, &stages[4])?);
        let pooled = global_avg_pool(&head)?;
        let foam_logits = self.desc.grasp_foam.fwd(&p, &pooled)?;
        let attach_logits = self.desc.grasp_attach.fwd(&p, &pooled)?;
        let mut foam = [foam_logits.data()[0], foam_logits.data()[1]];
        let mut attach = [attach_logits.data()[0], attach_logits.data()[1]];
        softmax(&mut foam);
        softmax(&mut attach);
        Ok(GraspStateReading {
            foam_probs: foam,
            attach_probs: attach,
        })
    }

    /// One steady-state multi-task tick: detect (both mask heads) + track,
    /// sharing the current frame's backbone features. Returns the features
    /// for reuse as `prev` next tick.
    pub fn forward_unified_tick(
        &self,
        img: &Tensor,
        prev: &FrameFeatures,
        prev_mask: &SupportMask,
    ) -> Result<(Vec<InstanceDetection>, TrackOutcome, FrameFeatures)> {
        let feats = self.backbone_features(img)?;
        let dets = self.detect_from_features(&feats, &DetectThresholds::default(), true, true)?;
        let tr = self.track_from_features(&feats, prev, prev_mask)?;
        Ok((dets, tr, feats))
    }

    /// Isolated detection network tick (own backbone pass, one mask head).
    pub fn forward_isolated_detect(
        &self,
        img: &Tensor,
        part_variant: bool,
    ) -> Result<Vec<InstanceDetection>> {
        let feats = self.backbone_features(img)?;
        self.detect_from_features(
            &feats,
            &DetectThresholds::default(),
            !part_variant,
            part_variant,
        )
    }

    /// Isolated tracker tick (own current-frame backbone pass; previous
    /// features cached, as in steady state).
    pub fn forward_isolated_track(
        &self,
        img: &Tensor,
        prev: &FrameFeatures,
        prev_mask: &SupportMask,
    ) -> Result<(TrackOutcome, FrameFeatures)> {
        let feats = self.backbone_features(img)?;
        let tr = self.track_from_features(&feats, prev, prev_mask)?;
        Ok((tr, feats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ready_model() -> UnifiedModel {
        let mut m = UnifiedModel::new(Arch::Arch1, 42);
        m.mark_ready();
        m
    }

    fn image(seed: u64, res: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::randn(&[1, 3, res, res], 0.5, &mut rng)
    }

    #[test]
    fn fresh_model_refuses_inference() {
        let m = UnifiedModel::new(Arch::Arch1, 1);
        let img = image(1, 160);
        assert!(matches!(m.detect(&img), Err(PerceptionError::NotReady)));
        let mask = SupportMask::new(BinMask::zeros(160, 160), 0);
        assert!(matches!(
            m.track(&img, &img, &mask),
            Err(PerceptionError::NotReady)
        ));
        let crop = image(2, 64);
        assert!(matches!(
            m.classify_grasp(&crop),
            Err(PerceptionError::NotReady)
        ));
    }

    #[test]
    fn detect_and_track_are_bit_deterministic() {
        let m = ready_model();
        let img = image(3, 160);
        let a = m.detect(&img).unwrap();
        let b = m.detect(&img).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.score.to_bits(), y.score.to_bits());
            assert_eq!(x.mask, y.mask);
        }
        let mut mask = BinMask::zeros(160, 160);
        for y in 60..100 {
            for x in 60..100 {
                mask.set(x, y, true);
            }
        }
        let sm = SupportMask::new(mask, 7);
        let prev = image(4, 160);
        let ta = m.track(&img, &prev, &sm).unwrap();
        let tb = m.track(&img, &prev, &sm).unwrap();
        assert_eq!(ta.mask.mask, tb.mask.mask);
        assert_eq!(ta.mask.t, 8);
    }

    #[test]
    fn shared_backbone_features_are_bit_identical_across_tasks() {
        let m = ready_model();
        let img = image(5, 160);
        let detect_feats = m.backbone_features(&img).unwrap();
        let track_cur_feats = m.backbone_features(&img).unwrap();
        for (a, b) in detect_feats.stages.iter().zip(&track_cur_feats.stages) {
            assert!(a.bitwise_eq(b));
        }
    }

    #[test]
    fn grasp_probabilities_sum_to_one() {
        let m = ready_model();
        let crop = image(6, 64);
        let r = m.classify_grasp(&crop).unwrap();
        assert!((r.foam_probs[0] + r.foam_probs[1] - 1.0).abs() < 1e-5);
        assert!((r.attach_probs[0] + r.attach_probs[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn grasp_rejects_wrong_crop_size() {
        let m = ready_model();
        let crop = image(7, 32);
        assert!(matches!(
            m.classify_grasp(&crop),
            Err(PerceptionError::Shape(_))
        ));
    }

    #[test]
    fn part_masks_are_subsets_of_instance_masks() {
        // Use a model whose heads produce non-trivial masks by lowering
        // thresholds until some detection emerges.
        let m = ready_model();
        let img = image(8, 160);
        let thr = DetectThresholds {
            objectness: 0.05,
            class_score: 0.05,
            nms_iou: 0.5,
        };
        let feats = m.backbone_features(&img).unwrap();
        let dets = m.detect_from_features(&feats, &thr, true, true).unwrap();
        for d in &dets {
            assert!(d.part_mask.subset_of(&d.mask));
        }
    }

    #[test]
    fn fp16_model_runs_inference() {
        let mut m = ready_model();
        let img = image(9, 160);
        let a = m.detect(&img).unwrap();
        m.set_precision(Precision::Fp16);
        let b = m.detect(&img).unwrap();
        // FP16 is a coarser grid; the pipeline must still run and produce
        // finite scores.
        for d in a.iter().chain(&b) {
            assert!(d.score.is_finite());
        }
    }

    #[test]
    fn unified_costs_are_strictly_below_isolated_sums() {
        for arch in Arch::ALL {
            let desc = ModelDesc::new(arch);
            let iso_p: usize = desc.isolated_param_counts().iter().sum();
            // The isolated comparison excludes the gripper network on both
            // sides (it is its own camera and model in either setup).
            let unified_p = desc.param_count()
                - desc.c3.param_count()
                - desc.grasp_conv.param_count()
                - desc.grasp_foam.param_count()
                - desc.grasp_attach.param_count();
            assert!(
                unified_p < iso_p,
                "{arch:?}: unified {unified_p} !< isolated {iso_p}"
            );
            let iso_m: u64 = desc.isolated_macs(160).iter().sum();
            let unified_m = desc.unified_macs(160) - desc.grasp_macs();
            assert!(unified_m < iso_m);
        }
    }

    #[test]
    fn arch_param_counts_scale_as_specified() {
        let base = ModelDesc::new(Arch::Arch1).param_count() as f64;
        for (arch, target) in [(Arch::Arch2, 1.25), (Arch::Arch3, 1.5)] {
            let n = ModelDesc::new(arch).param_count() as f64;
            assert!(
                ((n / base) - target).abs() / target <= 0.02,
                "{arch:?} ratio {}",
                n / base
            );
        }
    }
}
