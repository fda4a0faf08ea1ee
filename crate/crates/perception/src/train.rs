//! Loss assembly and backward plumbing for the three training tasks.
//!
//! Each function computes one sample's losses, accumulates parameter
//! gradients into a [`GradMap`], and returns the scalar loss. Callers batch
//! by summing over samples and scaling the map by 1/batch before the
//! optimizer step.
//!
//! The detector trains Faster-RCNN approximate-joint style: the RPN learns
//! from anchor targets while the ROI heads learn from ground-truth boxes,
//! jittered copies, background boxes, and the RPN's own current proposals
//! matched against ground truth.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use skyhook_nn::{
    bce_loss, resize_bilinear, resize_bilinear_backward, smooth_l1_loss, softmax_ce_loss,
    Precision, Tensor,
};

use crate::heads::{BOX_POOL, MASK_POOL};
use crate::layers::{apply_sigmoid, global_avg_pool, global_avg_pool_backward, relu_grad, relu_t, GradMap, P};
use crate::model::UnifiedModel;
use crate::roi::{box_iou, encode_deltas, roi_align, roi_align_backward, roi_level};
use crate::rpn::{
    assign_anchor_targets, decode_proposals, delta_channel, obj_channel, level_stride,
    AnchorSample,
};
use crate::track::fuse_stages;
use crate::types::{BinMask, BoxF, BrickClass, DetectThresholds};
use crate::{PerceptionError, Result};

/// Ground truth for one instance in a training image.
#[derive(Debug, Clone)]
pub struct GtInstance {
    pub class: BrickClass,
    pub bbox: BoxF,
    pub mask: BinMask,
    pub part_mask: BinMask,
}

/// Per-component detector losses for logging.
#[derive(Debug, Clone, Copy, Default)]
pub struct DetectorLoss {
    pub rpn_obj: f32,
    pub rpn_box: f32,
    pub cls: f32,
    pub box_reg: f32,
    pub mask: f32,
    pub part: f32,
}

impl DetectorLoss {
    pub fn total(&self) -> f32 {
        self.rpn_obj + self.rpn_box + self.cls + self.box_reg + self.mask + self.part
    }
}

fn require_fp32(model: &UnifiedModel) -> Result<()> {
    if model.precision != Precision::Fp32 {
        return Err(PerceptionError::Nn(skyhook_nn::NnError::Precision(
            "training requires an FP32 model".into(),
        )));
    }
    Ok(())
}

fn jitter_box(b: &BoxF, img_w: f64, img_h: f64, rng: &mut ChaCha8Rng) -> BoxF {
    let (cx, cy) = b.center();
    let w = b.w();
    let h = b.h();
    let nx = cx + (rng.gen::<f64>() - 0.5) * 0.2 * w;
    let ny = cy + (rng.gen::<f64>() - 0.5) * 0.2 * h;
    let nw = w * (0.9 + 0.2 * rng.gen::<f64>());
    let nh = h * (0.9 + 0.2 * rng.gen::<f64>());
    BoxF::new(nx - nw / 2.0, ny - nh / 2.0, nx + nw / 2.0, ny + nh / 2.0)
        .clip(img_w, img_h)
}

fn random_bg_box(gt: &[GtInstance], img_w: f64, img_h: f64, rng: &mut ChaCha8Rng) -> BoxF {
    let mut candidate = BoxF::new(0.0, 0.0, 16.0, 16.0);
    for _ in 0..20 {
        let side = 16.0 + rng.gen::<f64>() * 48.0;
        let x = rng.gen::<f64>() * (img_w - side).max(1.0);
        let y = rng.gen::<f64>() * (img_h - side).max(1.0);
        candidate = BoxF::new(x, y, x + side, y + side).clip(img_w, img_h);
        if gt.iter().all(|g| box_iou(&candidate, &g.bbox) < 0.3) {
            return candidate;
        }
    }
    candidate
}

/// Sample a binary mask over a box at `grid x grid` bin centers.
fn mask_targets(mask: &BinMask, b: &BoxF, grid: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; grid * grid];
    for gy in 0..grid {
        let y = b.y0 + (gy as f64 + 0.5) / grid as f64 * b.h();
        let py = (y.floor().max(0.0) as usize).min(mask.h.saturating_sub(1));
        for gx in 0..grid {
            let x = b.x0 + (gx as f64 + 0.5) / grid as f64 * b.w();
            let px = (x.floor().max(0.0) as usize).min(mask.w.saturating_sub(1));
            out[gy * grid + gx] = mask.get(px, py) as u8 as f32;
        }
    }
    out
}

/// One detector training sample: losses + gradient accumulation.
pub fn detector_loss(
    model: &UnifiedModel,
    img: &Tensor,
    gt: &[GtInstance],
    rng: &mut ChaCha8Rng,
    grads: &mut GradMap,
) -> Result<DetectorLoss> {
    require_fp32(model)?;
    let p = P(&model.params);
    let desc = &model.desc;
    let (_, _, img_h, img_w) = img.rank4()?;

    let bb = desc.c1.forward_train(&p, img)?;
    let (pyr, fpn_cache) = desc
        .det_fpn
        .forward(&p, &bb.stages[2], &bb.stages[3], &bb.stages[4])?;
    let rpn_caches = [
        desc.rpn.forward(&p, &pyr[0])?,
        desc.rpn.forward(&p, &pyr[1])?,
        desc.rpn.forward(&p, &pyr[2])?,
    ];

    let mut loss = DetectorLoss::default();
    let mut grad_maps = [
        Tensor::zeros(rpn_caches[0].map.dims()),
        Tensor::zeros(rpn_caches[1].map.dims()),
        Tensor::zeros(rpn_caches[2].map.dims()),
    ];

    // RPN anchor losses.
    let level_dims = {
        let d0 = rpn_caches[0].map.dims();
        let d1 = rpn_caches[1].map.dims();
        let d2 = rpn_caches[2].map.dims();
        [(d0[2], d0[3]), (d1[2], d1[3]), (d2[2], d2[3])]
    };
    let gt_boxes: Vec<BoxF> = gt.iter().map(|g| g.bbox).collect();
    let samples = assign_anchor_targets(&gt_boxes, &level_dims, rng);
    if !samples.is_empty() {
        // Objectness BCE, balanced across the label classes: positives are
        // scarce (elongated bricks rarely clear the square-anchor IoU gate,
        // so most images contribute one force-matched anchor per instance)
        // and would otherwise be drowned out by the negatives.
        let mut by_label: [(Vec<&AnchorSample>, f32); 2] =
            [(Vec::new(), 0.0), (Vec::new(), 1.0)];
        for s in &samples {
            by_label[s.target.is_some() as usize].0.push(s);
        }
        let present = by_label.iter().filter(|(v, _)| !v.is_empty()).count();
        let side_weight = 1.0 / present as f32;
        for (side, label) in &by_label {
            if side.is_empty() {
                continue;
            }
            let probs: Vec<f32> = side
                .iter()
                .map(|s| {
                    let m = &rpn_caches[s.level - 3].map;
                    skyhook_nn::sigmoid(m.at4(0, obj_channel(s.a), s.y, s.x))
                })
                .collect();
            let probs_t = Tensor::new(&[side.len()], probs)?;
            let labels_t = Tensor::filled(&[side.len()], *label);
            let (obj_loss, obj_grad) = bce_loss(&probs_t, &labels_t)?;
            loss.rpn_obj += side_weight * obj_loss;
            for (i, s) in side.iter().enumerate() {
                let gm = &mut grad_maps[s.level - 3];
                let v = gm.at4(0, obj_channel(s.a), s.y, s.x)
                    + side_weight * obj_grad.data()[i];
                gm.set4(0, obj_channel(s.a), s.y, s.x, v);
            }
        }

        let pos: Vec<_> = samples.iter().filter(|s| s.target.is_some()).collect();
        if !pos.is_empty() {
            let m = pos.len();
            let mut pred = Vec::with_capacity(m * 4);
            let mut tgt = Vec::with_capacity(m * 4);
            for s in &pos {
                let map = &rpn_caches[s.level - 3].map;
                for ch in 0..4 {
                    pred.push(map.at4(0, delta_channel(s.a) + ch, s.y, s.x));
                }
                tgt.extend_from_slice(&s.target.unwrap());
            }
            let pred_t = Tensor::new(&[m, 4], pred)?;
            let tgt_t = Tensor::new(&[m, 4], tgt)?;
            let (box_loss, box_grad) = smooth_l1_loss(&pred_t, &tgt_t)?;
            loss.rpn_box = box_loss;
            for (i, s) in pos.iter().enumerate() {
                let gm = &mut grad_maps[s.level - 3];
                for ch in 0..4 {
                    let v = gm.at4(0, delta_channel(s.a) + ch, s.y, s.x)
                        + box_grad.data()[i * 4 + ch];
                    gm.set4(0, delta_channel(s.a) + ch, s.y, s.x, v);
                }
            }
        }
    }

    // Pyramid gradients accumulate from the RPN and the ROI heads.
    let mut g_pyr = [
        Tensor::zeros(pyr[0].dims()),
        Tensor::zeros(pyr[1].dims()),
        Tensor::zeros(pyr[2].dims()),
    ];

    // ROI head training set: gt + 2 jittered copies each + 4 background.
    struct Roi {
        bbox: BoxF,
        label: usize,
        gt_idx: Option<usize>,
    }
    let mut rois: Vec<Roi> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        let b = g.bbox.clip(img_w as f64, img_h as f64);
        if b.w() >= 2.0 && b.h() >= 2.0 {
            rois.push(Roi {
                bbox: b,
                label: g.class.id(),
                gt_idx: Some(gi),
            });
        }
        for _ in 0..2 {
            let j = jitter_box(&g.bbox, img_w as f64, img_h as f64, rng);
            if j.w() >= 2.0 && j.h() >= 2.0 {
                rois.push(Roi {
                    bbox: j,
                    label: g.class.id(),
                    gt_idx: Some(gi),
                });
            }
        }
    }
    for _ in 0..4 {
        let b = random_bg_box(gt, img_w as f64, img_h as f64, rng);
        if b.w() >= 2.0 && b.h() >= 2.0 {
            rois.push(Roi {
                bbox: b,
                label: 0,
                gt_idx: None,
            });
        }
    }

    // Live RPN proposals keep the refine head honest: jittered ground truth
    // alone never shows it the offsets it must correct at inference time.
    let maps = [&rpn_caches[0].map, &rpn_caches[1].map, &rpn_caches[2].map];
    let props = decode_proposals(&maps, &DetectThresholds::default(), img_w, img_h)?;
    let mut extra_pos = 0;
    let mut extra_bg = 0;
    for pr in &props {
        if pr.bbox.w() < 2.0 || pr.bbox.h() < 2.0 {
            continue;
        }
        let mut best = (0usize, 0.0f64);
        for (gi, g) in gt.iter().enumerate() {
            let iou = box_iou(&pr.bbox, &g.bbox);
            if iou > best.1 {
                best = (gi, iou);
            }
        }
        if best.1 >= 0.5 && extra_pos < 4 {
            rois.push(Roi {
                bbox: pr.bbox,
                label: gt[best.0].class.id(),
                gt_idx: Some(best.0),
            });
            extra_pos += 1;
        } else if best.1 < 0.3 && extra_bg < 2 {
            rois.push(Roi {
                bbox: pr.bbox,
                label: 0,
                gt_idx: None,
            });
            extra_bg += 1;
        }
    }

    if !rois.is_empty() {
        let wch = desc.table.det_width;
        let n = rois.len();
        let mut crops = Tensor::zeros(&[n, wch, BOX_POOL, BOX_POOL]);
        for (i, r) in rois.iter().enumerate() {
            let level = roi_level(&r.bbox);
            let crop = roi_align(&pyr[level - 3], &r.bbox, BOX_POOL, level_stride(level))?;
            crops.data_mut()[i * wch * BOX_POOL * BOX_POOL..][..wch * BOX_POOL * BOX_POOL]
                .copy_from_slice(crop.data());
        }
        let (cls_logits, regs, box_cache) = desc.box_head.forward(&p, &crops)?;

        let labels: Vec<usize> = rois.iter().map(|r| r.label).collect();
        let (cls_loss, g_cls) = softmax_ce_loss(&cls_logits, &labels)?;
        loss.cls = cls_loss;

        let mut g_reg = Tensor::zeros(regs.dims());
        let pos_idx: Vec<usize> = (0..n).filter(|&i| rois[i].label > 0).collect();
        if !pos_idx.is_empty() {
            let m = pos_idx.len();
            let mut pred = Vec::with_capacity(m * 4);
            let mut tgt = Vec::with_capacity(m * 4);
            for &i in &pos_idx {
                for ch in 0..4 {
                    pred.push(regs.data()[i * 4 + ch]);
                }
                let g = &gt[rois[i].gt_idx.unwrap()];
                tgt.extend_from_slice(&encode_deltas(&rois[i].bbox, &g.bbox));
            }
            let (reg_loss, reg_grad) =
                smooth_l1_loss(&Tensor::new(&[m, 4], pred)?, &Tensor::new(&[m, 4], tgt)?)?;
            loss.box_reg = reg_loss;
            for (k, &i) in pos_idx.iter().enumerate() {
                for ch in 0..4 {
                    g_reg.data_mut()[i * 4 + ch] = reg_grad.data()[k * 4 + ch];
                }
            }
        }

        let g_crops = desc.box_head.backward(&p, &box_cache, &g_cls, &g_reg, grads)?;
        for (i, r) in rois.iter().enumerate() {
            let level = roi_level(&r.bbox);
            let slice = &g_crops.data()[i * wch * BOX_POOL * BOX_POOL..][..wch * BOX_POOL * BOX_POOL];
            let gt_tensor = Tensor::new(&[1, wch, BOX_POOL, BOX_POOL], slice.to_vec())?;
            let d_feat = roi_align_backward(
                pyr[level - 3].dims(),
                &r.bbox,
                BOX_POOL,
                level_stride(level),
                &gt_tensor,
            )?;
            g_pyr[level - 3].add_assign(&d_feat)?;
        }

        // Mask + part heads on positive ROIs.
        if !pos_idx.is_empty() {
            let m = pos_idx.len();
            let mut crops14 = Tensor::zeros(&[m, wch, MASK_POOL, MASK_POOL]);
            for (k, &i) in pos_idx.iter().enumerate() {
                let level = roi_level(&rois[i].bbox);
                let crop =
                    roi_align(&pyr[level - 3], &rois[i].bbox, MASK_POOL, level_stride(level))?;
                crops14.data_mut()[k * wch * MASK_POOL * MASK_POOL..][..wch * MASK_POOL * MASK_POOL]
                    .copy_from_slice(crop.data());
            }

            let run_head = |head: &crate::heads::MaskHeadDesc,
                                pick: &dyn Fn(&GtInstance) -> &BinMask,
                                grads: &mut GradMap|
             -> Result<(f32, Tensor)> {
                let (logits, cache) = head.forward(&p, &crops14)?;
                let probs = apply_sigmoid(&logits);
                let mut tgt = Vec::with_capacity(m * MASK_POOL * MASK_POOL);
                for &i in &pos_idx {
                    let g = &gt[rois[i].gt_idx.unwrap()];
                    tgt.extend(mask_targets(pick(g), &rois[i].bbox, MASK_POOL));
                }
                let tgt_t = Tensor::new(&[m, 1, MASK_POOL, MASK_POOL], tgt)?;
                let (l, g_logits) = bce_loss(&probs, &tgt_t)?;
                let g_in = head.backward(&p, &crops14, &cache, &g_logits, grads)?;
                Ok((l, g_in))
            };

            let (mask_loss, g14_mask) = run_head(&desc.mask_head, &|g| &g.mask, grads)?;
            let (part_loss, g14_part) = run_head(&desc.part_head, &|g| &g.part_mask, grads)?;
            loss.mask = mask_loss;
            loss.part = part_loss;

            let mut g14 = g14_mask;
            g14.add_assign(&g14_part)?;
            for (k, &i) in pos_idx.iter().enumerate() {
                let level = roi_level(&rois[i].bbox);
                let slice =
                    &g14.data()[k * wch * MASK_POOL * MASK_POOL..][..wch * MASK_POOL * MASK_POOL];
                let gt_tensor = Tensor::new(&[1, wch, MASK_POOL, MASK_POOL], slice.to_vec())?;
                let d_feat = roi_align_backward(
                    pyr[level - 3].dims(),
                    &rois[i].bbox,
                    MASK_POOL,
                    level_stride(level),
                    &gt_tensor,
                )?;
                g_pyr[level - 3].add_assign(&d_feat)?;
            }
        }
    }

    // RPN backward into the pyramid.
    for i in 0..3 {
        let g = desc
            .rpn
            .backward(&p, &pyr[i], &rpn_caches[i], &grad_maps[i], grads)?;
        g_pyr[i].add_assign(&g)?;
    }

    // FPN and backbone backward.
    let g_stages = desc.det_fpn.backward(
        &p,
        [&bb.stages[2], &bb.stages[3], &bb.stages[4]],
        &fpn_cache,
        [&g_pyr[0], &g_pyr[1], &g_pyr[2]],
        grads,
    )?;
    let [g3, g4, g5] = g_stages;
    desc.c1.backward(
        &p,
        img,
        &bb,
        vec![None, None, Some(g3), Some(g4), Some(g5)],
        grads,
    )?;

    Ok(loss)
}

/// One tracker training sample (a consecutive frame pair).
pub fn tracker_loss(
    model: &UnifiedModel,
    cur_img: &Tensor,
    prev_img: &Tensor,
    prev_mask: &BinMask,
    gt_mask: &BinMask,
    grads: &mut GradMap,
) -> Result<f32> {
    require_fp32(model)?;
    let p = P(&model.params);
    let desc = &model.desc;

    let cur_bb = desc.c1.forward_train(&p, cur_img)?;
    let prev_bb = desc.c1.forward_train(&p, prev_img)?;
    let m_in = prev_mask.to_tensor();
    let m_bb = desc.c2.forward_train(&p, &m_in)?;

    let fused = fuse_stages(&cur_bb.stages, &prev_bb.stages, &m_bb.stages)?;
    let (tpyr, tcache) = desc.trk_fpn.forward(&p, &fused[0], &fused[1], &fused[2])?;
    let (_, _, h3, w3) = tpyr[0].rank4()?;
    let up = resize_bilinear(&tpyr[0], h3 * 2, w3 * 2)?;
    let logits = desc.trk_head.fwd(&p, &up)?;

    // Stride-4 targets from the ground-truth mask (nearest cell center).
    let (_, _, lh, lw) = logits.rank4()?;
    let mut tgt = vec![0.0f32; lh * lw];
    for y in 0..lh {
        let py = (y * 4 + 2).min(gt_mask.h - 1);
        for x in 0..lw {
            let px = (x * 4 + 2).min(gt_mask.w - 1);
            tgt[y * lw + x] = gt_mask.get(px, py) as u8 as f32;
        }
    }
    let probs = apply_sigmoid(&logits);
    let tgt_t = Tensor::new(&[1, 1, lh, lw], tgt)?;
    let (loss, g_logits) = bce_loss(&probs, &tgt_t)?;

    let g_up = desc.trk_head.bwd(&p, &up, &g_logits, grads)?;
    let g_p3 = resize_bilinear_backward(h3, w3, &g_up)?;
    let zeros4 = Tensor::zeros(tpyr[1].dims());
    let zeros5 = Tensor::zeros(tpyr[2].dims());
    let g_fused = desc.trk_fpn.backward(
        &p,
        [&fused[0], &fused[1], &fused[2]],
        &tcache,
        [&g_p3, &zeros4, &zeros5],
        grads,
    )?;

    let c1n = desc.table.c1;
    let c2n = desc.table.c2;
    let mut g_cur = vec![None, None, None, None, None];
    let mut g_prev = vec![None, None, None, None, None];
    let mut g_mask = vec![None, None, None, None, None];
    for (li, gf) in g_fused.iter().enumerate() {
        let stage = li + 2;
        let parts = crate::layers::split_channel_grad(gf, &[c1n[stage], c1n[stage], c2n[stage]])?;
        let mut it = parts.into_iter();
        g_cur[stage] = Some(it.next().unwrap());
        g_prev[stage] = Some(it.next().unwrap());
        g_mask[stage] = Some(it.next().unwrap());
    }
    desc.c1.backward(&p, cur_img, &cur_bb, g_cur, grads)?;
    desc.c1.backward(&p, prev_img, &prev_bb, g_prev, grads)?;
    desc.c2.backward(&p, &m_in, &m_bb, g_mask, grads)?;

    Ok(loss)
}

/// One grasp-classifier training sample.
///
/// Labels: index 1 = positive state (foam compressed / magnets attached).
pub fn grasp_loss(
    model: &UnifiedModel,
    crop: &Tensor,
    foam_label: usize,
    attach_label: usize,
    grads: &mut GradMap,
) -> Result<f32> {
    require_fp32(model)?;
    let p = P(&model.params);
    let desc = &model.desc;

    let bb = desc.c3.forward_train(&p, crop)?;
    let head = relu_t(&desc.grasp_conv.fwd(&p, &bb.stages[4])?);
    let pooled = global_avg_pool(&head)?;
    let foam_logits = desc.grasp_foam.fwd(&p, &pooled)?;
    let attach_logits = desc.grasp_attach.fwd(&p, &pooled)?;

    let (foam_l, g_foam) = softmax_ce_loss(&foam_logits, &[foam_label])?;
    let (attach_l, g_attach) = softmax_ce_loss(&attach_logits, &[attach_label])?;

    let mut g_pooled = desc.grasp_foam.bwd(&p, &pooled, &g_foam, grads)?;
    g_pooled.add_assign(&desc.grasp_attach.bwd(&p, &pooled, &g_attach, grads)?)?;
    let g_head = global_avg_pool_backward(head.dims(), &g_pooled)?;
    let g_pre = relu_grad(&head, &g_head);
    let g_s5 = desc.grasp_conv.bwd(&p, &bb.stages[4], &g_pre, grads)?;
    desc.c3.backward(
        &p,
        crop,
        &bb,
        vec![None, None, None, None, Some(g_s5)],
        grads,
    )?;

    Ok(foam_l + attach_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Arch;
    use rand::SeedableRng;

    fn tiny_scene(res: usize) -> (Tensor, Vec<GtInstance>) {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let img = Tensor::randn(&[1, 3, res, res], 0.4, &mut rng);
        let mut mask = BinMask::zeros(res, res);
        for y in 10..30 {
            for x in 12..40 {
                mask.set(x, y, true);
            }
        }
        let mut part = BinMask::zeros(res, res);
        for y in 14..22 {
            for x in 20..32 {
                part.set(x, y, true);
            }
        }
        let gt = vec![GtInstance {
            class: BrickClass::Red,
            bbox: BoxF::new(12.0, 10.0, 40.0, 30.0),
            mask,
            part_mask: part,
        }];
        (img, gt)
    }

    #[test]
    fn detector_loss_is_finite_and_produces_gradients() {
        let model = UnifiedModel::new(Arch::Arch1, 5);
        let (img, gt) = tiny_scene(64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut grads = GradMap::new();
        let loss = detector_loss(&model, &img, &gt, &mut rng, &mut grads).unwrap();
        assert!(loss.total().is_finite());
        assert!(loss.rpn_obj > 0.0);
        assert!(loss.cls > 0.0);
        // Gradients reach the very first backbone layer.
        assert!(grads.map.contains_key("c1.s1.w"));
        let g = &grads.map["c1.s1.w"];
        assert!(g.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn tracker_loss_reaches_all_three_streams() {
        let model = UnifiedModel::new(Arch::Arch1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cur = Tensor::randn(&[1, 3, 64, 64], 0.4, &mut rng);
        let prev = Tensor::randn(&[1, 3, 64, 64], 0.4, &mut rng);
        let mut pm = BinMask::zeros(64, 64);
        let mut gm = BinMask::zeros(64, 64);
        for y in 20..40 {
            for x in 20..40 {
                pm.set(x, y, true);
                gm.set(x + 2, y, true);
            }
        }
        let mut grads = GradMap::new();
        let loss = tracker_loss(&model, &cur, &prev, &pm, &gm, &mut grads).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        assert!(grads.map.contains_key("c1.s1.w"));
        assert!(grads.map.contains_key("c2.s1.w"));
        assert!(grads.map.contains_key("trk.head.w"));
    }

    #[test]
    fn grasp_loss_decreases_under_gradient_steps() {
        use skyhook_nn::{optimizer_step, LrPolicy, OptimAlgo, OptimizerState};
        let mut model = UnifiedModel::new(Arch::Arch1, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let crop = Tensor::randn(&[1, 3, 64, 64], 0.4, &mut rng);
        let mut opt = OptimizerState::new(
            OptimAlgo::Adam {
                beta1: 0.9,
                beta2: 0.99,
            },
            0.01,
            LrPolicy::Constant,
        );
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..30 {
            let mut grads = GradMap::new();
            last = grasp_loss(&model, &crop, 1, 0, &mut grads).unwrap();
            if first.is_none() {
                first = Some(last);
            }
            optimizer_step(&mut opt, &mut model.params, &grads.map).unwrap();
        }
        assert!(
            last < first.unwrap() * 0.5,
            "loss did not drop: {} -> {last}",
            first.unwrap()
        );
    }

    #[test]
    fn detector_training_overfits_one_image() {
        use skyhook_nn::{optimizer_step, LrPolicy, OptimAlgo, OptimizerState};
        let mut model = UnifiedModel::new(Arch::Arch1, 8);
        let (img, gt) = tiny_scene(64);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut opt = OptimizerState::new(
            OptimAlgo::Adam {
                beta1: 0.9,
                beta2: 0.99,
            },
            0.003,
            LrPolicy::Constant,
        );
        let mut first = None;
        let mut last = DetectorLoss::default();
        for _ in 0..40 {
            let mut grads = GradMap::new();
            last = detector_loss(&model, &img, &gt, &mut rng, &mut grads).unwrap();
            if first.is_none() {
                first = Some(last.total());
            }
            optimizer_step(&mut opt, &mut model.params, &grads.map).unwrap();
        }
        assert!(
            last.total() < first.unwrap(),
            "loss did not drop: {} -> {}",
            first.unwrap(),
            last.total()
        );
    }

    #[test]
    fn fp16_model_rejects_training() {
        let mut model = UnifiedModel::new(Arch::Arch1, 9);
        model.set_precision(Precision::Fp16);
        let (img, gt) = tiny_scene(64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut grads = GradMap::new();
        assert!(detector_loss(&model, &img, &gt, &mut rng, &mut grads).is_err());
    }
}
