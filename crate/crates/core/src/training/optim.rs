//! Optimizers over parameter stores: SGD with momentum and Adam.

use crate::error::{MopeError, Result};
use crate::graph::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f32 },
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd_default() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }
}

/// Optimizer state; velocities and moments start at zero on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    velocity: Option<ParamStore>,
    moment1: Option<ParamStore>,
    moment2: Option<ParamStore>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            step: 0,
            velocity: None,
            moment1: None,
            moment2: None,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads` must carry exactly the keys of `params`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f32) -> Result<()> {
        self.step += 1;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                let velocity = self
                    .velocity
                    .get_or_insert_with(|| grads.zeros_like());
                for (key, p) in params.iter_mut() {
                    let g = grads
                        .get(*key)
                        .ok_or_else(|| MopeError::MissingTensor(key.name()))?;
                    let v = velocity
                        .get_mut(*key)
                        .ok_or_else(|| MopeError::MissingTensor(key.name()))?;
                    for ((pv, &gv), vv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut())
                    {
                        *vv = momentum * *vv + gv;
                        *pv -= lr * *vv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let m1 = self.moment1.get_or_insert_with(|| grads.zeros_like());
                let m2 = self.moment2.get_or_insert_with(|| grads.zeros_like());
                let c1 = 1.0 - (beta1 as f64).powi(self.step as i32);
                let c2 = 1.0 - (beta2 as f64).powi(self.step as i32);
                for (key, p) in params.iter_mut() {
                    let g = grads
                        .get(*key)
                        .ok_or_else(|| MopeError::MissingTensor(key.name()))?;
                    let m = m1
                        .get_mut(*key)
                        .ok_or_else(|| MopeError::MissingTensor(key.name()))?;
                    let v = m2
                        .get_mut(*key)
                        .ok_or_else(|| MopeError::MissingTensor(key.name()))?;
                    for (((pv, &gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        let mhat = *mv as f64 / c1;
                        let vhat = *vv as f64 / c2;
                        *pv -= (lr as f64 * mhat / (vhat.sqrt() + eps as f64)) as f32;
                    }
                }
            }
        }
        Ok(())
    }
}
