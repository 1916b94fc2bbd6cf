use serde::{Deserialize, Serialize};

use super::{lit, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one pair of moment buffers per parameter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = |id| Tensor::zeros(store.value(id).shape().to_vec());
        Self {
            config,
            step: 0,
            m: store.ids().map(zeros).collect(),
            v: store.ids().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Apply one update using the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::dim("adam", &[self.m.len()], &[store.len()]));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (lit::<T>(c.beta1), lit::<T>(c.beta2));
        let (one_b1, one_b2) = (lit::<T>(1.0 - c.beta1), lit::<T>(1.0 - c.beta2));
        let step_size = lit::<T>(c.lr / bc1);
        let bc2_sqrt = lit::<T>(bc2.sqrt());
        let eps = lit::<T>(c.epsilon);
        for id in store.ids().collect::<Vec<_>>() {
            let (value, grad) = store.value_and_grad_mut(id);
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            if grad.shape() != m.shape() || value.shape() != m.shape() {
                return Err(Error::dim("adam", m.shape(), grad.shape()));
            }
            for (((p, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                let denom = vi.sqrt() / bc2_sqrt + eps;
                *p -= step_size * *mi / denom;
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau schedule keyed to a metric that should increase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub best_metric: f64,
    pub epochs_since_improvement: usize,
    pub lr: f64,
    pub decays: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, patience: usize, factor: f64) -> Self {
        Self {
            patience,
            factor,
            best_metric: f64::NEG_INFINITY,
            epochs_since_improvement: 0,
            lr: initial_lr,
            decays: 0,
        }
    }

    /// Record an epoch's validation metric and return the learning rate for
    /// the next epoch.
    pub fn epoch_end(&mut self, metric: f64) -> f64 {
        if metric > self.best_metric {
            self.best_metric = metric;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.patience {
                self.lr *= self.factor;
                self.decays += 1;
                self.epochs_since_improvement = 0;
            }
        }
        self.lr
    }
}
