//! Synthetic scene generation for the brick perception stack.
//!
//! Everything here is a pure function of a seed: brick sprites are
//! procedurally shaded rectangles composited back-to-front with occlusion
//! bookkeeping, sequences are viewport crops of a larger static world, and
//! gripper crops are parametric renders of the foam/magnet assembly. Images
//! are quantized to the 8-bit grid at creation so the PNG round-trip through
//! a dataset directory is lossless and replays are byte-identical.

mod augment;
mod brick;
mod dataset;
mod gripper;
mod raster;
mod rle;
mod scene;
mod sequence;

pub use augment::{
    augment, blur_img, colour_jitter, mirror_annotation, mirror_img, rotate_sample, scale_sample,
    AugOp,
};
pub use brick::{brick_spec, BrickSpec};
pub use dataset::{
    build_all, load_detection, load_grasp, load_index, load_tracking, save_detection_sample,
    DatasetIndex, DatasetSpec, DetSample, GraspSample, Split, SplitIds, TrackFrame,
};
pub use gripper::render_gripper_crop;
pub use raster::{from_rgb8, gaussian_blur, quantize_u8, sample_bilinear, to_rgb8};
pub use rle::{rle_decode, rle_encode};
pub use scene::{
    bbox_from_mask, narrow_cfg, synth_scene, synth_scene_cfg, wide_cfg, Background,
    SceneAnnotation, SceneCfg, SceneInstance, VISIBILITY_THRESHOLD,
};
pub use sequence::{draw_motion, gen_sequence, gen_sequence_cfg, MotionSpec};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("empty mask")]
    EmptyMask,
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SceneError>;
