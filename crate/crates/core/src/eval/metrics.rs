use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Subtask;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// F1 of the positive class (index 1).
    Binary,
    /// Unweighted mean of per-class F1 over classes seen in gold or
    /// predictions.
    Macro,
}

impl Averaging {
    pub fn for_subtask(subtask: Subtask) -> Self {
        if subtask.is_binary() {
            Averaging::Binary
        } else {
            Averaging::Macro
        }
    }
}

fn class_f1(pred: &[usize], gold: &[usize], class: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &g) in pred.iter().zip(gold) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn f1_score(pred: &[usize], gold: &[usize], averaging: Averaging) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::ShapeMismatch {
            context: "f1 inputs",
            expected: format!("{} predictions", gold.len()),
            actual: pred.len().to_string(),
        });
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("f1 needs at least one instance".into()));
    }
    Ok(match averaging {
        Averaging::Binary => class_f1(pred, gold, 1),
        Averaging::Macro => {
            let classes: BTreeSet<usize> = pred.iter().chain(gold).copied().collect();
            classes.iter().map(|&c| class_f1(pred, gold, c)).sum::<f64>() / classes.len() as f64
        }
    })
}

/// `matrix[gold][pred]` counts.
pub fn confusion_matrix(pred: &[usize], gold: &[usize], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    if pred.len() != gold.len() {
        return Err(Error::ShapeMismatch {
            context: "confusion matrix inputs",
            expected: format!("{} predictions", gold.len()),
            actual: pred.len().to_string(),
        });
    }
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p >= n_classes || g >= n_classes {
            return Err(Error::LabelOutOfRange {
                label: p.max(g),
                classes: n_classes,
            });
        }
        m[g][p] += 1;
    }
    Ok(m)
}
