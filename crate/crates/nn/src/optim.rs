//! SGD with Nesterov momentum and bias-corrected Adam, plus the STEP
//! learning-rate policy. Parameters and gradients travel as name-keyed
//! `BTreeMap`s so iteration order (and therefore arithmetic order) is
//! deterministic. Parameters without a gradient this step are untouched.

use std::collections::BTreeMap;

use crate::tensor::Tensor;
use crate::{NnError, Result};

pub const ADAM_EPS: f32 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub enum OptimAlgo {
    SgdNesterov { momentum: f32 },
    Adam { beta1: f32, beta2: f32 },
}

#[derive(Debug, Clone, Copy)]
pub enum LrPolicy {
    Constant,
    /// Multiply the learning rate by `gamma` after every `period` steps.
    Step { gamma: f32, period: usize },
}

#[derive(Debug)]
pub struct OptimizerState {
    pub algo: OptimAlgo,
    pub base_lr: f32,
    pub policy: LrPolicy,
    pub step_count: usize,
    m1: BTreeMap<String, Vec<f32>>,
    m2: BTreeMap<String, Vec<f32>>,
}

impl OptimizerState {
    pub fn new(algo: OptimAlgo, base_lr: f32, policy: LrPolicy) -> Self {
        OptimizerState {
            algo,
            base_lr,
            policy,
            step_count: 0,
            m1: BTreeMap::new(),
            m2: BTreeMap::new(),
        }
    }

    /// Learning rate that the *next* applied step will use.
    pub fn effective_lr(&self) -> f32 {
        match self.policy {
            LrPolicy::Constant => self.base_lr,
            LrPolicy::Step { gamma, period } => {
                let decays = if period == 0 { 0 } else { self.step_count / period };
                self.base_lr * gamma.powi(decays as i32)
            }
        }
    }
}

/// Apply one optimizer step to every parameter that has a gradient.
///
/// SGD-Nesterov: `v <- mu*v + g; theta <- theta - lr*(g + mu*v)`.
/// Adam: bias-corrected first/second moments, `eps = 1e-8`.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut BTreeMap<String, Tensor>,
    grads: &BTreeMap<String, Tensor>,
) -> Result<()> {
    let lr = state.effective_lr();
    let t = state.step_count + 1;
    for (name, g) in grads {
        let p = params.get_mut(name).ok_or_else(|| {
            NnError::Optim(format!("gradient for unknown parameter `{name}`"))
        })?;
        if p.dims() != g.dims() {
            return Err(NnError::Shape(format!(
                "param `{name}` dims {:?} vs grad dims {:?}",
                p.dims(),
                g.dims()
            )));
        }
        let n = p.len();
        match state.algo {
            OptimAlgo::SgdNesterov { momentum } => {
                let v = state
                    .m1
                    .entry(name.clone())
                    .or_insert_with(|| vec![0.0; n]);
                if v.len() != n {
                    return Err(NnError::Shape(format!(
                        "moment buffer for `{name}` has stale shape"
                    )));
                }
                let pd = p.data_mut();
                for i in 0..n {
                    let gi = g.data()[i];
                    v[i] = momentum * v[i] + gi;
                    pd[i] -= lr * (gi + momentum * v[i]);
                }
            }
            OptimAlgo::Adam { beta1, beta2 } => {
                let m = state
                    .m1
                    .entry(name.clone())
                    .or_insert_with(|| vec![0.0; n]);
                let v = state
                    .m2
                    .entry(name.clone())
                    .or_insert_with(|| vec![0.0; n]);
                if m.len() != n || v.len() != n {
                    return Err(NnError::Shape(format!(
                        "moment buffer for `{name}` has stale shape"
                    )));
                }
                let bc1 = 1.0 - beta1.powi(t as i32);
                let bc2 = 1.0 - beta2.powi(t as i32);
                let pd = p.data_mut();
                for i in 0..n {
                    let gi = g.data()[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    pd[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
    state.step_count += 1;
    Ok(())
}
