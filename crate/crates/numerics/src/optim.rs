//! Adam with a step-decay learning-rate schedule.

use std::collections::HashMap;

use crate::error::{NumericsError, Result};
use crate::param::{Gradients, ParamId, ParamStore};

/// `base · decay^⌊epoch / interval⌋`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub interval: usize,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            decay: 1.0,
            interval: 1,
        }
    }

    pub fn step_decay(base: f64, decay: f64, interval: usize) -> Self {
        Self { base, decay, interval }
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        let k = epoch / self.interval.max(1);
        self.base * self.decay.powi(k as i32)
    }
}

/// Adam state for one parameter group.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
    step: u64,
    first: HashMap<ParamId, Vec<f64>>,
    second: HashMap<ParamId, Vec<f64>>,
}

impl Adam {
    pub fn new(schedule: LrSchedule) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
            step: 0,
            first: HashMap::new(),
            second: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` using `grads`. Every listed parameter
    /// must have a gradient.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &Gradients,
        params: &[ParamId],
        epoch: usize,
    ) -> Result<()> {
        for &id in params {
            if grads.get(id).is_none() {
                return Err(NumericsError::MissingGradient(store.name(id).to_string()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = self.schedule.rate(epoch);
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for &id in params {
            let g = grads.get(id).expect("checked above").data();
            let value = store.get_mut(id);
            if value.len() != g.len() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam",
                    lhs: value.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            let m = self.first.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.second.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            for (k, w) in value.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
