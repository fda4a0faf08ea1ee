//! Unified multi-task perception stack.
//!
//! One shared backbone feeds four task heads: brick instance detection with
//! class scores, instance segmentation masks, part (magnetic-patch) masks,
//! and a siamese mask tracker. A second, smaller network classifies gripper
//! state (foam compression, magnet attachment) from a wrist-camera crop.
//!
//! Everything runs on the deterministic CPU kernels from `skyhook_nn`; there
//! is no hidden framework state. Model parameters live in a flat name ->
//! tensor map so optimizers and checkpoints can treat them uniformly.

pub mod arch;
pub mod backbone;
pub mod fpn;
pub mod heads;
pub mod layers;
pub mod model;
pub mod roi;
pub mod rpn;
pub mod track;
pub mod train;
pub mod types;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error(transparent)]
    Nn(#[from] skyhook_nn::NnError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("box error: {0}")]
    Box(String),
    #[error("model is not ready: no trained weights loaded")]
    NotReady,
}

pub type Result<T> = std::result::Result<T, PerceptionError>;

pub use arch::{Arch, ChannelTable};
pub use model::{FrameFeatures, ModelCost, UnifiedModel};
pub use roi::{box_iou, nms, roi_align, roi_align_backward, roi_level};
pub use track::TrackOutcome;
pub use types::{
    AttachState, BinMask, BoxF, BrickClass, DetectThresholds, FoamState, GraspStateReading,
    InstanceDetection, SupportMask,
};
