//! Checkpoint evaluation: all four mIoU columns, both grasp accuracies, and
//! a median forward-pass wall clock.
//!
//! Detection metrics pool matched-instance IoUs across the whole split.
//! Tracking is scored the way the mission loop runs it: chained from the
//! first frame's ground-truth support mask, feeding each prediction back in
//! as the next support. Wall clock is the median of 21 unified multi-task
//! ticks on one test image.

use std::fs;
use std::path::Path;
use std::time::Instant;

use skyhook_perception::{BinMask, BoxF, SupportMask, UnifiedModel};
use skyhook_scenegen::{load_detection, load_grasp, load_tracking, Split};

use crate::checkpoint::load_checkpoint;
use crate::metrics::{accuracy, miou_boxes_parts, miou_masks_parts};
use crate::train::{attach_label, foam_label};
use crate::{HarnessError, Result};

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub config: String,
    /// All mIoU and accuracy fields are fractions in [0, 1]; the CSV writer
    /// scales them by 100 for readability.
    pub box_miou: f64,
    pub seg_miou: f64,
    pub part_miou: f64,
    pub track_miou: f64,
    pub foam_acc: f64,
    pub attach_acc: f64,
    pub forward_ms: f64,
}

pub const CSV_HEADER: &str =
    "config,box_miou,seg_miou,part_miou,track_miou,foam_acc,attach_acc,forward_ms";

impl MetricRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3}",
            self.config,
            self.box_miou * 100.0,
            self.seg_miou * 100.0,
            self.part_miou * 100.0,
            self.track_miou * 100.0,
            self.foam_acc * 100.0,
            self.attach_acc * 100.0,
            self.forward_ms
        )
    }
}

pub fn write_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

struct Pool {
    sum: f64,
    denom: usize,
}

impl Pool {
    fn new() -> Self {
        Pool { sum: 0.0, denom: 0 }
    }

    fn add(&mut self, part: (f64, usize)) {
        self.sum += part.0;
        self.denom += part.1;
    }

    fn mean(&self) -> f64 {
        if self.denom == 0 {
            1.0
        } else {
            self.sum / self.denom as f64
        }
    }
}

/// Evaluate a model on one dataset split.
pub fn evaluate_on(
    model: &UnifiedModel,
    data_dir: &Path,
    split: Split,
    label: &str,
) -> Result<MetricRow> {
    let det = load_detection(data_dir, split)?;
    let trk = load_tracking(data_dir, split)?;
    let grasp = load_grasp(data_dir, split)?;
    if det.is_empty() {
        return Err(HarnessError::Config(format!(
            "missing dataset split: {} detection",
            split.dir()
        )));
    }

    let mut boxes = Pool::new();
    let mut segs = Pool::new();
    let mut parts = Pool::new();
    for s in &det {
        let preds = model.detect(&s.image)?;
        let pred_boxes: Vec<BoxF> = preds.iter().map(|p| p.bbox.clone()).collect();
        let gt_boxes: Vec<BoxF> = crate::data::gt_instances(&s.annotation)
            .iter()
            .map(|g| g.bbox.clone())
            .collect();
        boxes.add(miou_boxes_parts(&pred_boxes, &gt_boxes));

        let pred_masks: Vec<BinMask> = preds.iter().map(|p| p.mask.clone()).collect();
        let gt_masks: Vec<BinMask> =
            s.annotation.instances.iter().map(|i| i.mask.clone()).collect();
        segs.add(miou_masks_parts(&pred_masks, &gt_masks));

        let pred_parts: Vec<BinMask> = preds
            .iter()
            .map(|p| p.part_mask.clone())
            .filter(|m| m.area() > 0)
            .collect();
        let gt_parts: Vec<BinMask> = s
            .annotation
            .instances
            .iter()
            .map(|i| i.part_mask.clone())
            .filter(|m| m.area() > 0)
            .collect();
        parts.add(miou_masks_parts(&pred_parts, &gt_parts));
    }

    let mut track = Pool::new();
    for seq in &trk {
        if seq.len() < 2 || seq[0].mask.area() == 0 {
            continue;
        }
        let mut support = SupportMask::new(seq[0].mask.clone(), 0);
        let mut prev_feats = model.backbone_features(&seq[0].image)?;
        for frame in &seq[1..] {
            let cur_feats = model.backbone_features(&frame.image)?;
            let out = model.track_from_features(&cur_feats, &prev_feats, &support)?;
            track.add(miou_masks_parts(
                std::slice::from_ref(&out.mask.mask),
                std::slice::from_ref(&frame.mask),
            ));
            support = out.mask;
            prev_feats = cur_feats;
        }
    }

    let mut foam_ok = 0usize;
    let mut attach_ok = 0usize;
    for s in &grasp {
        let reading = model.classify_grasp(&s.image)?;
        if foam_label(reading.foam()) == foam_label(s.foam) {
            foam_ok += 1;
        }
        if attach_label(reading.attach()) == attach_label(s.attach) {
            attach_ok += 1;
        }
    }

    let timing_img = &det[0].image;
    let support = det[0]
        .annotation
        .instances
        .first()
        .map(|i| SupportMask::new(i.mask.clone(), 0));
    let feats = model.backbone_features(timing_img)?;
    let mut times_ms = Vec::with_capacity(21);
    for _ in 0..21 {
        let start = Instant::now();
        match &support {
            Some(sm) => {
                model.forward_unified_tick(timing_img, &feats, sm)?;
            }
            None => {
                model.detect(timing_img)?;
            }
        }
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let forward_ms = times_ms[times_ms.len() / 2];

    Ok(MetricRow {
        config: label.to_string(),
        box_miou: boxes.mean(),
        seg_miou: segs.mean(),
        part_miou: parts.mean(),
        track_miou: track.mean(),
        foam_acc: accuracy(foam_ok, grasp.len()),
        attach_acc: accuracy(attach_ok, grasp.len()),
        forward_ms,
    })
}

/// Evaluate on the held-out test split.
pub fn evaluate_model(model: &UnifiedModel, data_dir: &Path, label: &str) -> Result<MetricRow> {
    evaluate_on(model, data_dir, Split::Test, label)
}

/// Load a checkpoint and evaluate it on the test split.
pub fn evaluate(checkpoint: &Path, data_dir: &Path) -> Result<MetricRow> {
    let model = load_checkpoint(checkpoint)?;
    let label = format!(
        "arch{}/{}",
        match model.arch {
            skyhook_perception::Arch::Arch1 => 1,
            skyhook_perception::Arch::Arch2 => 2,
            skyhook_perception::Arch::Arch3 => 3,
        },
        match model.precision {
            skyhook_nn::Precision::Fp32 => "fp32",
            skyhook_nn::Precision::Fp16 => "fp16",
        }
    );
    evaluate_on(&model, data_dir, Split::Test, &label)
}
