use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::store::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state; moment buffers mirror the store's
/// trainable parameters one to one.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParameterStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .ids()
            .map(|id| vec![0.0; store.get(id).len()])
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter and clears the
    /// gradients. Fails without touching anything if a trainable parameter
    /// has no gradient.
    pub fn step(&mut self, store: &mut ParameterStore) -> Result<()> {
        if self.first.len() != store.len() {
            return Err(NnError::InvalidSpec(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        for id in store.ids() {
            let t = store.get(id);
            if t.requires_grad() && t.grad().is_none() {
                return Err(NnError::MissingGradient(store.name(id).to_string()));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let t = store.get_mut(id);
            if !t.requires_grad() {
                continue;
            }
            let grad = t.grad().expect("checked above").to_vec();
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for (k, (p, g)) in t.values_mut().iter_mut().zip(&grad).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                *p -= learning_rate * mhat / (vhat.sqrt() + epsilon);
            }
        }
        store.clear_grads();
        Ok(())
    }
}
