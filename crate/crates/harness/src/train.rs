//! The training loops.
//!
//! Detector and tracker share one parameter set and one optimizer; each step
//! draws a whole batch from one of the two tasks with probability 0.5 and
//! backpropagates the summed batch loss. The grasp classifier touches a
//! disjoint subnet and trains in its own loop afterwards. An optional
//! pretraining stage warms the scene backbone on a 4-way brick
//! classification pretext before any of that.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyhook_nn::{
    linear, linear_backward, optimizer_step, softmax_ce_loss, LrPolicy, OptimAlgo, OptimizerState,
    Tensor,
};
use skyhook_perception::layers::{global_avg_pool, global_avg_pool_backward, GradMap, P};
use skyhook_perception::train::{detector_loss, grasp_loss, tracker_loss};
use skyhook_perception::{AttachState, FoamState, UnifiedModel};
use skyhook_scenegen::{load_detection, load_grasp, load_tracking, synth_scene, Background, Split};

use crate::checkpoint::save_checkpoint;
use crate::config::{PretrainConfig, TrainConfig};
use crate::data::{draw_detector_sample, draw_track_pair};
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Pretext,
    Detector,
    Tracker,
    Grasp,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::Pretext => "pretext",
            Task::Detector => "detector",
            Task::Tracker => "tracker",
            Task::Grasp => "grasp",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossEntry {
    pub step: usize,
    pub task: Task,
    pub loss: f32,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: UnifiedModel,
    pub loss_log: Vec<LossEntry>,
}

pub fn foam_label(f: FoamState) -> usize {
    match f {
        FoamState::Uncompressed => 0,
        FoamState::Compressed => 1,
    }
}

pub fn attach_label(a: AttachState) -> usize {
    match a {
        AttachState::NotAttached => 0,
        AttachState::Attached => 1,
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Config(msg.into()))
}

/// 4-way brick-classification pretext on single-brick scenes. Trains the
/// scene backbone plus a throwaway linear head that is dropped afterwards.
fn pretrain_backbone(
    model: &mut UnifiedModel,
    pc: &PretrainConfig,
    batch: usize,
    rng: &mut ChaCha8Rng,
    log: &mut Vec<LossEntry>,
) -> Result<()> {
    const RES: usize = 96;
    let c5 = model.desc.table.c1[4];
    let head_w = Tensor::randn(&[4, c5], (2.0 / c5 as f64).sqrt() as f32, rng);
    model.params.insert("pretext.w".to_string(), head_w);
    model
        .params
        .insert("pretext.b".to_string(), Tensor::zeros(&[4]));

    let mut opt = OptimizerState::new(
        OptimAlgo::SgdNesterov {
            momentum: pc.momentum,
        },
        pc.lr,
        LrPolicy::Step {
            gamma: 0.1,
            period: (pc.steps / 3).max(1),
        },
    );
    let background = Background::default();

    for step in 0..pc.steps {
        let mut grads = GradMap::new();
        let mut total = 0.0f32;
        let mut n = 0usize;
        while n < batch {
            let (img, ann) = synth_scene(rng.gen::<u64>(), 1, &background, RES);
            let inst = match ann.instances.first() {
                Some(i) => i,
                None => continue,
            };
            let label = inst.class.id() - 1;
            let p = P(&model.params);
            let bb = model.desc.c1.forward_train(&p, &img)?;
            let head = &bb.stages[4];
            let pooled = global_avg_pool(head)?;
            let x = pooled.reshape(&[1, c5])?;
            let logits = linear(&x, p.t("pretext.w"), p.b("pretext.b"))?;
            let (loss, g_logits) = softmax_ce_loss(&logits, &[label])?;
            let lg = linear_backward(&x, p.t("pretext.w"), &g_logits)?;
            let g_pooled = lg.d_input.reshape(&[1, c5, 1, 1])?;
            let g_head = global_avg_pool_backward(head.dims(), &g_pooled)?;
            let stage_grads = vec![None, None, None, None, Some(g_head)];
            model.desc.c1.backward(&p, &img, &bb, stage_grads, &mut grads)?;
            grads.add("pretext.w", lg.d_weights);
            grads.add_bias("pretext.b", lg.d_bias);
            total += loss;
            n += 1;
        }
        grads.scale(1.0 / n as f32);
        optimizer_step(&mut opt, &mut model.params, &grads.map)?;
        log.push(LossEntry {
            step,
            task: Task::Pretext,
            loss: total / n as f32,
        });
    }

    model.params.remove("pretext.w");
    model.params.remove("pretext.b");
    Ok(())
}

/// Train a fresh model on the dataset under `data_dir`.
///
/// Training always runs in FP32; the finished model is cast to the
/// configured precision before it is returned, marked ready for inference.
pub fn train(config: &TrainConfig, data_dir: &Path) -> Result<TrainOutput> {
    if config.batch == 0 {
        return config_err("batch size must be positive");
    }
    if !(0.0..=1.0).contains(&config.mix_prob) {
        return config_err("mixing probability must lie in [0, 1]");
    }
    let det = load_detection(data_dir, Split::Train)?;
    let trk = load_tracking(data_dir, Split::Train)?;
    let grasp = load_grasp(data_dir, Split::Train)?;
    if det.is_empty() {
        return config_err("missing dataset split: train detection");
    }
    if trk.is_empty() {
        return config_err("missing dataset split: train tracking");
    }
    if grasp.is_empty() {
        return config_err("missing dataset split: train grasp");
    }

    let mut model = UnifiedModel::new(config.arch, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::new();

    if let Some(pc) = &config.pretrain {
        pretrain_backbone(&mut model, pc, config.batch, &mut rng, &mut log)?;
    }

    let mut opt = OptimizerState::new(
        OptimAlgo::Adam {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
        },
        config.lr,
        LrPolicy::Step {
            gamma: config.lr_gamma,
            period: (config.steps / 3).max(1),
        },
    );

    for step in 0..config.steps {
        let mut grads = GradMap::new();
        let detector = rng.gen_bool(config.mix_prob);
        let mut total = 0.0f32;
        let mut n = 0usize;
        if detector {
            for _ in 0..config.batch {
                let (img, gt) = draw_detector_sample(&det, &config.augment, &mut rng);
                if gt.is_empty() {
                    continue;
                }
                let l = detector_loss(&model, &img, &gt, &mut rng, &mut grads)?;
                total += l.total();
                n += 1;
            }
        } else {
            for _ in 0..config.batch {
                let pair =
                    draw_track_pair(&trk, &config.augment, config.static_pair_prob, &mut rng);
                if let Some(p) = pair {
                    let l =
                        tracker_loss(&model, &p.cur, &p.prev, &p.prev_mask, &p.gt_mask, &mut grads)?;
                    total += l;
                    n += 1;
                }
            }
        }
        if n > 0 {
            grads.scale(1.0 / n as f32);
            optimizer_step(&mut opt, &mut model.params, &grads.map)?;
        }
        log.push(LossEntry {
            step,
            task: if detector { Task::Detector } else { Task::Tracker },
            loss: total / n.max(1) as f32,
        });
    }

    let mut gopt = OptimizerState::new(
        OptimAlgo::Adam {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
        },
        config.grasp_lr,
        LrPolicy::Step {
            gamma: config.lr_gamma,
            period: (config.grasp_steps / 3).max(1),
        },
    );
    for step in 0..config.grasp_steps {
        let mut grads = GradMap::new();
        let mut total = 0.0f32;
        for _ in 0..config.batch {
            let s = &grasp[rng.gen_range(0..grasp.len())];
            let l = grasp_loss(
                &model,
                &s.image,
                foam_label(s.foam),
                attach_label(s.attach),
                &mut grads,
            )?;
            total += l;
        }
        grads.scale(1.0 / config.batch as f32);
        optimizer_step(&mut gopt, &mut model.params, &grads.map)?;
        log.push(LossEntry {
            step: config.steps + step,
            task: Task::Grasp,
            loss: total / config.batch as f32,
        });
    }

    model.mark_ready();
    model.set_precision(config.precision);
    Ok(TrainOutput {
        model,
        loss_log: log,
    })
}

pub fn loss_log_csv(log: &[LossEntry]) -> String {
    let mut out = String::from("step,task,loss\n");
    for e in log {
        out.push_str(&format!("{},{},{:.6}\n", e.step, e.task, e.loss));
    }
    out
}

/// Train and write `checkpoint.umtp` plus `loss_log.csv` into `out_dir`.
pub fn train_to_dir(config: &TrainConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainOutput> {
    fs::create_dir_all(out_dir)?;
    let out = train(config, data_dir)?;
    save_checkpoint(&out.model, &out_dir.join("checkpoint.umtp"))?;
    fs::write(out_dir.join("loss_log.csv"), loss_log_csv(&out.loss_log))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skyhook_perception::Arch;
    use skyhook_scenegen::{build_all, DatasetSpec};
    use std::path::PathBuf;

    fn tiny_dataset(detection: usize, grasp_per_kind: usize) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            detection,
            tracking_seqs: 1,
            tracking_frames: 2,
            grasp_per_kind,
        };
        build_all(11, dir.path(), &spec).unwrap();
        let p = dir.path().to_path_buf();
        (dir, p)
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            steps: 4,
            grasp_steps: 2,
            batch: 2,
            augment: vec![],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn missing_split_is_a_config_error() {
        let (_guard, dir) = tiny_dataset(2, 0);
        let err = train(&tiny_config(), &dir).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)), "{err}");
    }

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        let (_guard, dir) = tiny_dataset(2, 3);
        let cfg = TrainConfig {
            lr: 0.0,
            grasp_lr: 0.0,
            ..tiny_config()
        };
        let out = train(&cfg, &dir).unwrap();
        let fresh = UnifiedModel::new(cfg.arch, cfg.seed);
        for (name, t) in &fresh.params {
            assert!(
                out.model.params[name].bitwise_eq(t),
                "parameter `{name}` moved under lr = 0"
            );
        }
    }

    #[test]
    fn overfitting_one_sample_halves_the_loss() {
        let (_guard, dir) = tiny_dataset(2, 3);
        let cfg = TrainConfig {
            steps: 50,
            grasp_steps: 0,
            batch: 2,
            mix_prob: 1.0,
            ..tiny_config()
        };
        let out = train(&cfg, &dir).unwrap();
        let det: Vec<f32> = out
            .loss_log
            .iter()
            .filter(|e| e.task == Task::Detector)
            .map(|e| e.loss)
            .collect();
        assert_eq!(det.len(), 50);
        let first = det[0];
        let last = *det.last().unwrap();
        assert!(
            last <= first * 0.5,
            "loss did not halve: first {first}, last {last}"
        );
    }

    #[test]
    fn same_seed_reproduces_the_loss_curve_and_checkpoint() {
        let (_guard, dir) = tiny_dataset(2, 3);
        let cfg = TrainConfig {
            steps: 6,
            grasp_steps: 3,
            batch: 2,
            augment: skyhook_scenegen::AugOp::ALL.to_vec(),
            ..TrainConfig::default()
        };
        let a = train(&cfg, &dir).unwrap();
        let b = train(&cfg, &dir).unwrap();
        let bits = |log: &[LossEntry]| -> Vec<(usize, u32)> {
            log.iter().map(|e| (e.step, e.loss.to_bits())).collect()
        };
        assert_eq!(bits(&a.loss_log), bits(&b.loss_log));
        assert_eq!(
            crate::checkpoint::encode_checkpoint(&a.model),
            crate::checkpoint::encode_checkpoint(&b.model)
        );
    }

    #[test]
    fn grasp_loss_falls_over_its_loop() {
        let (_guard, dir) = tiny_dataset(2, 3);
        let cfg = TrainConfig {
            steps: 1,
            grasp_steps: 120,
            batch: 4,
            ..tiny_config()
        };
        let out = train(&cfg, &dir).unwrap();
        let grasp: Vec<f32> = out
            .loss_log
            .iter()
            .filter(|e| e.task == Task::Grasp)
            .map(|e| e.loss)
            .collect();
        assert_eq!(grasp.len(), 120);
        let head: f32 = grasp[..10].iter().sum::<f32>() / 10.0;
        let tail: f32 = grasp[110..].iter().sum::<f32>() / 10.0;
        assert!(tail < head * 0.5, "grasp loss {head} -> {tail}");
    }

    #[test]
    fn pretraining_runs_and_drops_its_head() {
        let (_guard, dir) = tiny_dataset(2, 3);
        let cfg = TrainConfig {
            pretrain: Some(PretrainConfig {
                steps: 3,
                ..PretrainConfig::default()
            }),
            steps: 2,
            grasp_steps: 1,
            batch: 2,
            augment: vec![],
            ..TrainConfig::default()
        };
        let out = train(&cfg, &dir).unwrap();
        assert!(!out.model.params.contains_key("pretext.w"));
        assert!(!out.model.params.contains_key("pretext.b"));
        let pretext: Vec<&LossEntry> = out
            .loss_log
            .iter()
            .filter(|e| e.task == Task::Pretext)
            .collect();
        assert_eq!(pretext.len(), 3);
        assert!(pretext.iter().all(|e| e.loss.is_finite()));
        let fresh = UnifiedModel::new(cfg.arch, cfg.seed);
        assert_eq!(out.model.params.len(), fresh.params.len());
    }

    #[test]
    fn train_to_dir_writes_checkpoint_and_log() {
        let (_guard, dir) = tiny_dataset(2, 3);
        let out_dir = tempfile::tempdir().unwrap();
        let run = out_dir.path().join("run");
        let cfg = tiny_config();
        train_to_dir(&cfg, &dir, &run).unwrap();
        let model = crate::checkpoint::load_checkpoint(&run.join("checkpoint.umtp")).unwrap();
        assert!(model.is_ready());
        assert_eq!(model.arch, Arch::Arch1);
        let log = std::fs::read_to_string(run.join("loss_log.csv")).unwrap();
        assert!(log.starts_with("step,task,loss\n"));
        assert_eq!(log.lines().count(), 1 + cfg.steps + cfg.grasp_steps);
    }
}
