//! Deterministic CPU kernels for the small multi-task networks used across
//! this workspace: direct convolutions, depthwise-separable blocks, bilinear
//! resizing, the losses and optimizers the training harness needs, IEEE
//! binary16 precision handling, and a finite-difference gradient checker.
//!
//! There is no autodiff and no global state. Every operation is a pure
//! function of its inputs, forward passes are bit-deterministic in FP32, and
//! randomness only enters through explicitly seeded generators.

pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod optim;
pub mod resize;
pub mod tensor;

pub use conv::{
    conv2d, conv2d_backward, conv2d_backward_raw, conv2d_raw, depthwise_conv2d,
    depthwise_conv2d_backward, depthwise_conv2d_backward_raw, depthwise_conv2d_raw, dws_block,
    dws_block_backward, dws_block_backward_raw, dws_block_train, dws_block_train_raw, relu,
    relu_backward, ConvGrads, ConvKernel, DwsGrads,
};
pub use gradcheck::{grad_check, standard_layer_suite, GradCheckConfig, GradCheckOutcome, LayerKind};
pub use linear::{linear, linear_backward, LinearGrads};
pub use loss::{bce_loss, sigmoid, smooth_l1_loss, softmax, softmax_ce_loss};
pub use optim::{optimizer_step, LrPolicy, OptimAlgo, OptimizerState};
pub use resize::{resize_bilinear, resize_bilinear_backward};
pub use tensor::{Precision, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precision violation: {0}")]
    Precision(String),
    #[error("optimizer: {0}")]
    Optim(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(NnError::Shape(msg.into()))
}

/// Sum with four independent accumulation chains. The evaluation order is
/// fixed, so results stay bit-deterministic; the split only exists to break
/// the serial dependency chain in hot reductions.
pub(crate) fn sum4(v: &[f32]) -> f32 {
    let mut acc = [0f32; 4];
    let chunks = v.chunks_exact(4);
    let rem = chunks.remainder();
    for c in chunks {
        acc[0] += c[0];
        acc[1] += c[1];
        acc[2] += c[2];
        acc[3] += c[3];
    }
    for (i, r) in rem.iter().enumerate() {
        acc[i] += r;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

pub(crate) fn dot4(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 4];
    let n = a.len() / 4 * 4;
    let mut i = 0;
    while i < n {
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
        i += 4;
    }
    for j in n..a.len() {
        acc[j - n] += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}
