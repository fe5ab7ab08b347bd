use serde::{Deserialize, Serialize};

use crate::autograd::class_loss_with_grad;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Focal,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    #[default]
    None,
    /// `n / (C · n_c)`, resolved from the training labels.
    InverseFrequency,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub promise_weight: f64,
    pub evidence_weight: f64,
    pub kind: LossKind,
    pub focal_gamma: f64,
    pub class_weights: ClassWeights,
}

impl Default for LossConfig {
    /// Multi-task defaults: 0.6 / 0.4 weighting with focal loss.
    fn default() -> Self {
        Self {
            promise_weight: 0.6,
            evidence_weight: 0.4,
            kind: LossKind::Focal,
            focal_gamma: 2.0,
            class_weights: ClassWeights::None,
        }
    }
}

impl LossConfig {
    /// Single-task defaults: inverse-frequency weighted cross-entropy.
    pub fn single_task() -> Self {
        Self {
            kind: LossKind::CrossEntropy,
            class_weights: ClassWeights::InverseFrequency,
            ..Self::default()
        }
    }

    pub fn cross_entropy() -> Self {
        Self {
            kind: LossKind::CrossEntropy,
            ..Self::default()
        }
    }

    /// Effective focusing exponent; 0 for cross-entropy.
    pub fn gamma(&self) -> f64 {
        match self.kind {
            LossKind::CrossEntropy => 0.0,
            LossKind::Focal => self.focal_gamma,
        }
    }

    /// Rejects negative or non-finite settings and warns when the task
    /// weights are not a convex combination.
    pub fn validate(&self) -> Result<()> {
        let weights = [self.promise_weight, self.evidence_weight];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "task weights must be finite and non-negative, got {weights:?}"
            )));
        }
        if !self.focal_gamma.is_finite() || self.focal_gamma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "focal_gamma must be >= 0, got {}",
                self.focal_gamma
            )));
        }
        if let ClassWeights::Fixed(w) = &self.class_weights {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument("class weights must be non-negative".into()));
            }
        }
        if !self.is_normalized() {
            log::warn!(
                "task weights {} + {} do not sum to 1",
                self.promise_weight,
                self.evidence_weight
            );
        }
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        (self.promise_weight + self.evidence_weight - 1.0).abs() <= 1e-9
    }

    /// Per-class weights for a task with `counts[c]` training examples of
    /// class `c`; `None` when unweighted.
    pub fn resolve_class_weights(&self, counts: &[usize]) -> Result<Option<Vec<f64>>> {
        match &self.class_weights {
            ClassWeights::None => Ok(None),
            ClassWeights::InverseFrequency => Ok(Some(inverse_frequency_weights(counts))),
            ClassWeights::Fixed(w) if w.len() == counts.len() => Ok(Some(w.clone())),
            ClassWeights::Fixed(w) => Err(Error::ShapeMismatch {
                context: "class weights",
                expected: format!("{} classes", counts.len()),
                actual: w.len().to_string(),
            }),
        }
    }
}

/// `n / (C · n_c)` per class; classes absent from the data get weight 1.
pub fn inverse_frequency_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let classes = counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                1.0
            } else {
                total as f64 / (classes * c as f64)
            }
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Loss of one example: `-ln p` or `(1 - p)^γ · -ln p`, times the gold
/// class weight when `class_weights` is given.
pub fn task_loss(
    logits: &[f64],
    gold: usize,
    config: &LossConfig,
    class_weights: Option<&[f64]>,
) -> Result<f64> {
    if gold >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: gold,
            classes: logits.len(),
        });
    }
    let weight = class_weights.map_or(1.0, |w| w[gold]);
    Ok(class_loss_with_grad(logits, gold, config.gamma(), weight).0)
}

/// `promise_weight · L_p + evidence_weight · L_e`.
pub fn combined_loss(promise_loss: f64, evidence_loss: f64, config: &LossConfig) -> Result<f64> {
    if !promise_loss.is_finite() {
        return Err(Error::NonFiniteComponent("promise"));
    }
    if !evidence_loss.is_finite() {
        return Err(Error::NonFiniteComponent("evidence"));
    }
    Ok(config.promise_weight * promise_loss + config.evidence_weight * evidence_loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits_for(p: f64) -> [f64; 2] {
        // softmax([0, ln(p / (1 - p))])[1] == p
        [0.0, (p / (1.0 - p)).ln()]
    }

    #[test]
    fn focal_closed_form() {
        let config = LossConfig::default();
        let l = task_loss(&logits_for(0.9), 1, &config, None).unwrap();
        assert!((l - 0.01 * -(0.9f64).ln()).abs() < 1e-12);
        assert!((l - 1.0536e-3).abs() < 1e-7);
    }

    #[test]
    fn cross_entropy_and_perfect_prediction() {
        let ce = LossConfig::cross_entropy();
        let l = task_loss(&logits_for(0.25), 1, &ce, None).unwrap();
        assert!((l + 0.25f64.ln()).abs() < 1e-12);
        for config in [ce, LossConfig::default()] {
            assert_eq!(task_loss(&[0.0, 800.0], 1, &config, None).unwrap(), 0.0);
        }
        assert!(task_loss(&[0.0, 1.0], 2, &LossConfig::default(), None).is_err());
    }

    #[test]
    fn class_weight_scales_loss() {
        let ce = LossConfig::cross_entropy();
        let plain = task_loss(&[0.2, 0.5], 0, &ce, None).unwrap();
        let weighted = task_loss(&[0.2, 0.5], 0, &ce, Some(&[3.0, 1.0])).unwrap();
        assert!((weighted - 3.0 * plain).abs() < 1e-12);
    }

    #[test]
    fn combination() {
        let config = LossConfig::default();
        assert!((combined_loss(1.0, 2.0, &config).unwrap() - 1.4).abs() < 1e-12);
        assert!((combined_loss(0.7, 0.7, &config).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(
            combined_loss(f64::NAN, 1.0, &config),
            Err(Error::NonFiniteComponent("promise"))
        ));
    }

    #[test]
    fn weights_and_validation() {
        assert_eq!(inverse_frequency_weights(&[30, 10]), vec![40.0 / 60.0, 2.0]);
        assert_eq!(inverse_frequency_weights(&[4, 0]), vec![0.5, 1.0]);
        let skewed = LossConfig {
            promise_weight: 0.7,
            ..LossConfig::default()
        };
        assert!(skewed.validate().is_ok());
        assert!(!skewed.is_normalized());
        let negative = LossConfig {
            evidence_weight: -0.1,
            ..LossConfig::default()
        };
        assert!(negative.validate().is_err());
        let fixed = LossConfig {
            class_weights: ClassWeights::Fixed(vec![1.0, 2.0]),
            ..LossConfig::default()
        };
        assert!(fixed.resolve_class_weights(&[1, 2, 3]).is_err());
    }
}
