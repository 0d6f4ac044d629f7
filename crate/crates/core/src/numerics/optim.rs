//! Adam with bias correction and the exponential staircase learning-rate
//! schedule.

use std::collections::BTreeMap;

use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, tensor) in store.iter() {
            m.insert(name.to_string(), Tensor::zeros(tensor.shape().to_vec()));
            v.insert(name.to_string(), Tensor::zeros(tensor.shape().to_vec()));
        }
        Self { m, v, step: 0 }
    }
}

/// One bias-corrected Adam update over every parameter.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f64) {
    adam_step_filtered(store, state, lr, |_| true);
}

/// Adam update restricted to parameters accepted by `trainable`; the
/// moments of excluded parameters are left untouched (frozen groups stay
/// entirely frozen). The step counter advances once per call.
pub fn adam_step_filtered(
    store: &mut ParamStore,
    state: &mut AdamState,
    lr: f64,
    trainable: impl Fn(&str) -> bool,
) {
    state.step += 1;
    let t = state.step as i32;
    let m_corr = 1.0 - BETA1.powi(t);
    let v_corr = 1.0 - BETA2.powi(t);

    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        if !trainable(&name) {
            continue;
        }
        let grad = store.grad(&name).clone();
        let m = state.m.get_mut(&name).expect("moment missing");
        let v = state.v.get_mut(&name).expect("moment missing");
        let param = store.get_mut(&name);
        for i in 0..param.len() {
            let g = grad.data()[i];
            let mi = BETA1 * m.data()[i] + (1.0 - BETA1) * g;
            let vi = BETA2 * v.data()[i] + (1.0 - BETA2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / m_corr;
            let v_hat = vi / v_corr;
            param.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Staircase schedule: lr(step) = base * rate^floor(step / decay_steps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_rate: f64,
    pub decay_steps: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, decay_rate: f64, decay_steps: u64) -> Self {
        assert!(decay_steps >= 1, "decay_steps must be at least 1");
        Self {
            base_lr,
            decay_rate,
            decay_steps,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let exponent = (step / self.decay_steps) as i32;
        self.base_lr * self.decay_rate.powi(exponent)
    }
}
