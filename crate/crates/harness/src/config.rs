//! Training hyperparameters.
//!
//! Defaults are the finetuning recipe the perception stack was tuned with:
//! Adam (β1 = 0.9, β2 = 0.99) at base lr 0.001 under a step policy that
//! decays by 0.1 twice over the run, batch 8, 3000 steps, and a 0.5
//! detector/tracker mixing probability. An optional backbone pretraining
//! stage (SGD with Nesterov momentum 0.9 at lr 0.01 on a 4-way brick
//! classification pretext task) is off by default.

use skyhook_nn::Precision;
use skyhook_perception::Arch;
use skyhook_scenegen::AugOp;

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub lr: f32,
    pub momentum: f32,
    pub steps: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            lr: 0.01,
            momentum: 0.9,
            steps: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub arch: Arch,
    /// Precision of the returned model; training itself always runs FP32.
    pub precision: Precision,
    pub augment: Vec<AugOp>,
    /// Probability of drawing a detector batch (vs a tracker batch).
    pub mix_prob: f64,
    /// Fraction of tracker pairs replaced by identical-frame pairs.
    pub static_pair_prob: f64,
    pub seed: u64,
    pub steps: usize,
    pub grasp_steps: usize,
    pub batch: usize,
    pub lr: f32,
    /// The grasp head is a much smaller network than the detector trunk and
    /// tolerates (and needs) a hotter rate to reach confident logits.
    pub grasp_lr: f32,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    /// Step-policy decay factor; the period is `steps / 3`.
    pub lr_gamma: f32,
    pub pretrain: Option<PretrainConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Arch::Arch1,
            precision: Precision::Fp32,
            augment: AugOp::ALL.to_vec(),
            mix_prob: 0.5,
            static_pair_prob: 0.3,
            seed: 0,
            steps: 3000,
            grasp_steps: 1200,
            batch: 8,
            lr: 0.001,
            grasp_lr: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            lr_gamma: 0.1,
            pretrain: None,
        }
    }
}

impl TrainConfig {
    /// Short human-readable descriptor used in metric rows.
    pub fn label(&self) -> String {
        let arch = match self.arch {
            Arch::Arch1 => "arch1",
            Arch::Arch2 => "arch2",
            Arch::Arch3 => "arch3",
        };
        let prec = match self.precision {
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
        };
        let augs = if self.augment.is_empty() {
            "none".to_string()
        } else {
            self.augment
                .iter()
                .map(|o| o.name())
                .collect::<Vec<_>>()
                .join("+")
        };
        format!("{arch}/{prec}/{augs}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_tuned_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.adam_beta1, 0.9);
        assert_eq!(c.adam_beta2, 0.99);
        assert_eq!(c.batch, 8);
        assert_eq!(c.steps, 3000);
        assert_eq!(c.mix_prob, 0.5);
        assert!(c.pretrain.is_none());
        let p = PretrainConfig::default();
        assert_eq!(p.lr, 0.01);
        assert_eq!(p.momentum, 0.9);
    }

    #[test]
    fn label_is_stable() {
        let c = TrainConfig {
            augment: vec![AugOp::Colour, AugOp::Mirror],
            ..TrainConfig::default()
        };
        assert_eq!(c.label(), "arch1/fp32/colour+mirror");
        let none = TrainConfig {
            augment: vec![],
            ..TrainConfig::default()
        };
        assert_eq!(none.label(), "arch1/fp32/none");
    }
}
