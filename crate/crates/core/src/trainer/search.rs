//! Hyperparameter proposals: quasi-random before any results exist, a
//! tree-structured Parzen estimator afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub batch_sizes: Vec<usize>,
    /// Sampled uniformly.
    pub weight_decay: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: (1e-5, 5e-5),
            batch_sizes: vec![4, 8, 12],
            weight_decay: (0.01, 0.3),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.learning_rate;
        let (wlo, whi) = self.weight_decay;
        if !(lo > 0.0 && lo <= hi) || !(0.0 <= wlo && wlo <= whi) || self.batch_sizes.is_empty() {
            return Err(Error::InvalidArgument(format!("degenerate search space {self:?}")));
        }
        if self.batch_sizes.contains(&0) {
            return Err(Error::InvalidArgument("batch size 0 in search space".into()));
        }
        Ok(())
    }

    pub fn contains(&self, t: &TrialConfig) -> bool {
        let (lo, hi) = self.learning_rate;
        let (wlo, whi) = self.weight_decay;
        (lo..=hi).contains(&t.learning_rate)
            && (wlo..=whi).contains(&t.weight_decay)
            && self.batch_sizes.contains(&t.batch_size)
    }

    fn to_unit(&self, t: &TrialConfig) -> ([f64; 2], usize) {
        let (lo, hi) = self.learning_rate;
        let (wlo, whi) = self.weight_decay;
        let u_lr = unit(t.learning_rate.ln(), lo.ln(), hi.ln());
        let u_wd = unit(t.weight_decay, wlo, whi);
        let b = self
            .batch_sizes
            .iter()
            .position(|&b| b == t.batch_size)
            .unwrap_or(0);
        ([u_lr, u_wd], b)
    }

    fn config_at(&self, trial_index: usize, u: [f64; 2], batch: usize) -> TrialConfig {
        let (lo, hi) = self.learning_rate;
        let (wlo, whi) = self.weight_decay;
        TrialConfig {
            trial_index,
            learning_rate: (lo.ln() + u[0] * (hi.ln() - lo.ln())).exp().clamp(lo, hi),
            batch_size: self.batch_sizes[batch],
            weight_decay: (wlo + u[1] * (whi - wlo)).clamp(wlo, whi),
        }
    }
}

fn unit(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_index: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub fold_losses: Vec<f64>,
    pub mean_validation_loss: f64,
    /// 1-based epoch of the best validation loss in each fold.
    pub fold_best_epochs: Vec<usize>,
}

impl TrialResult {
    pub fn new(config: TrialConfig, fold_losses: Vec<f64>, fold_best_epochs: Vec<usize>) -> Self {
        let mean_validation_loss = fold_losses.iter().sum::<f64>() / fold_losses.len() as f64;
        Self {
            config,
            fold_losses,
            mean_validation_loss,
            fold_best_epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeSettings {
    /// Fraction of the history treated as good.
    pub gamma: f64,
    pub n_candidates: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_candidates: 24,
        }
    }
}

/// Radical inverse of `i` in `base`.
fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

struct Parzen {
    points: Vec<f64>,
    bandwidth: f64,
}

impl Parzen {
    fn new(points: Vec<f64>) -> Self {
        let n = points.len() as f64 + 1.0;
        Self {
            points,
            bandwidth: (0.25 * n.powf(-0.2)).max(0.05),
        }
    }

    /// Mixture of a uniform prior and one Gaussian per observation.
    fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        let kernels: f64 = self
            .points
            .iter()
            .map(|p| norm * (-0.5 * ((x - p) / h).powi(2)).exp())
            .sum();
        (1.0 + kernels) / (self.points.len() as f64 + 1.0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let j = rng.random_range(0..=self.points.len());
        if j == self.points.len() {
            return rng.random::<f64>();
        }
        let x = self.points[j] + Normal::new(0.0, self.bandwidth).unwrap().sample(rng);
        // Reflect once at the borders, then clamp.
        let x = if x < 0.0 { -x } else if x > 1.0 { 2.0 - x } else { x };
        x.clamp(0.0, 1.0)
    }
}

/// Smoothed category frequencies.
fn category_probs(choices: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![1.0; k];
    for &c in choices {
        counts[c] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.into_iter().map(|c| c / total).collect()
}

/// Proposes the configuration for trial `trial_index`. Deterministic in
/// `(seed, trial_index, history)`.
pub fn sample_trial(
    space: &SearchSpace,
    trial_index: usize,
    seed: u64,
    history: &[TrialResult],
    settings: &TpeSettings,
) -> TrialConfig {
    let k = space.batch_sizes.len();
    if history.is_empty() {
        let offset = derive_seed(seed, 0x4a17) % 4096;
        let i = trial_index as u64 + 1 + offset;
        let batch = ((halton(i, 5) * k as f64) as usize).min(k - 1);
        return space.config_at(trial_index, [halton(i, 2), halton(i, 3)], batch);
    }

    let mut ranked: Vec<&TrialResult> = history.iter().collect();
    ranked.sort_by(|a, b| {
        a.mean_validation_loss
            .total_cmp(&b.mean_validation_loss)
            .then(a.config.trial_index.cmp(&b.config.trial_index))
    });
    let n_good = ((settings.gamma * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
    let (good, bad) = ranked.split_at(n_good);
    let encode = |set: &[&TrialResult]| -> (Vec<[f64; 2]>, Vec<usize>) {
        set.iter().map(|t| space.to_unit(&t.config)).unzip()
    };
    let (good_u, good_b) = encode(good);
    let (bad_u, bad_b) = encode(bad);
    let l: Vec<Parzen> = (0..2).map(|d| Parzen::new(good_u.iter().map(|u| u[d]).collect())).collect();
    let g: Vec<Parzen> = (0..2).map(|d| Parzen::new(bad_u.iter().map(|u| u[d]).collect())).collect();
    let l_cat = category_probs(&good_b, k);
    let g_cat = category_probs(&bad_b, k);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, trial_index as u64));
    let mut best: Option<(f64, [f64; 2], usize)> = None;
    for _ in 0..settings.n_candidates.max(1) {
        let u = [l[0].sample(&mut rng), l[1].sample(&mut rng)];
        let r: f64 = rng.random();
        let mut acc = 0.0;
        let mut b = k - 1;
        for (c, p) in l_cat.iter().enumerate() {
            acc += p;
            if r < acc {
                b = c;
                break;
            }
        }
        let score = (0..2)
            .map(|d| l[d].density(u[d]).ln() - g[d].density(u[d]).ln())
            .sum::<f64>()
            + l_cat[b].ln()
            - g_cat[b].ln();
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, u, b));
        }
    }
    let (_, u, b) = best.expect("at least one candidate");
    space.config_at(trial_index, u, b)
}

/// Lowest mean validation loss; ties go to the earlier trial.
pub fn select_best(trials: &[TrialResult]) -> Option<&TrialResult> {
    trials.iter().min_by(|a, b| {
        a.mean_validation_loss
            .total_cmp(&b.mean_validation_loss)
            .then(a.config.trial_index.cmp(&b.config.trial_index))
    })
}
