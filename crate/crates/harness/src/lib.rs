//! Training, evaluation, and experiment plumbing for the perception stack.
//!
//! The pieces: greedy-matched mIoU metrics, the 0.5 detector/tracker
//! data-mixing training loop with a separate grasp-classifier loop, an
//! ablation runner that retrains under cumulative augmentation sets, and a
//! checksummed binary checkpoint format.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod metrics;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scene(#[from] skyhook_scenegen::SceneError),
    #[error(transparent)]
    Perception(#[from] skyhook_perception::PerceptionError),
    #[error(transparent)]
    Nn(#[from] skyhook_nn::NnError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub use ablation::{ablate, ablation_rows};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use config::{PretrainConfig, TrainConfig};
pub use data::gt_instances;
pub use eval::{evaluate, evaluate_model, write_csv, MetricRow};
pub use metrics::{accuracy, miou_boxes, miou_masks};
pub use train::{train, train_to_dir, LossEntry, Task, TrainOutput};
