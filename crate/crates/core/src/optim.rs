//! AdamW with decoupled weight decay and a warmup-then-cosine schedule.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::params::{Grads, Matrix, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Updates only trainable parameters; weight decay applies to parameters
/// flagged for it (weights, not biases or norms).
#[derive(Clone, Debug)]
pub struct AdamW {
    config: AdamWConfig,
    weight_decay: f64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore, config: AdamWConfig, weight_decay: f64) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Array2::zeros(p.value.raw_dim()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            weight_decay,
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.steps += 1;
        let AdamWConfig { beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let param = store.get_mut(id);
            if !param.trainable {
                continue;
            }
            if param.decay && self.weight_decay > 0.0 {
                param.value *= 1.0 - lr * self.weight_decay;
            }
            let Some(g) = grads.get(id) else {
                continue;
            };
            let i = id.index();
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            ndarray::Zip::from(&mut param.value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Linear warmup to `peak` over the first `warmup_steps` updates, then
/// cosine decay reaching 0 at `total_steps`. Steps are 1-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn new(peak: f64, total_steps: usize, warmup_fraction: f64) -> Self {
        let warmup_steps = ((total_steps as f64) * warmup_fraction).round() as usize;
        Self {
            peak,
            warmup_steps: warmup_steps.min(total_steps),
            total_steps,
        }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps > 0 && step <= self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let decay_steps = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / decay_steps as f64).min(1.0);
        self.peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
