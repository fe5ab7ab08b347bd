//! Prediction with test-time augmentation: word dropout and source-tag
//! rotation over several passes, probability averaging and thresholds.

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{PromiseRecord, Subtask};
use crate::error::{Error, Result};
use crate::eval::{f1_score, Averaging};
use crate::featurizer::{parse_tag_block, Featurizer};
use crate::hashing::{derive_seed, fnv1a};
use crate::net::{softmax, PromiseModel, TaskHeadOutput};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtaConfig {
    pub n_passes: usize,
    pub word_dropout_rate: f64,
    pub vary_metadata: bool,
    /// Decision thresholds for binary tasks; missing tasks use 0.5.
    pub thresholds: BTreeMap<Subtask, f64>,
    pub seed: u64,
    /// Source tags the metadata variation rotates through.
    pub source_synonyms: Vec<String>,
}

impl Default for TtaConfig {
    fn default() -> Self {
        Self {
            n_passes: 3,
            word_dropout_rate: 0.1,
            vary_metadata: true,
            thresholds: BTreeMap::new(),
            seed: 42,
            source_synonyms: vec![
                "ESG REPORT".into(),
                "SUSTAINABILITY REPORT".into(),
                "CSR REPORT".into(),
            ],
        }
    }
}

impl TtaConfig {
    /// A single unaugmented pass.
    pub fn plain() -> Self {
        Self {
            n_passes: 1,
            word_dropout_rate: 0.0,
            vary_metadata: false,
            ..Self::default()
        }
    }

    pub fn threshold(&self, subtask: Subtask) -> f64 {
        self.thresholds.get(&subtask).copied().unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_passes == 0 {
            return Err(Error::InvalidArgument("n_passes must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.word_dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "word dropout rate {} outside [0, 1)",
                self.word_dropout_rate
            )));
        }
        if let Some((t, v)) = self.thresholds.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("threshold {v} for {t} outside [0, 1]")));
        }
        Ok(())
    }
}

static METADATA: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\[PAGE [^\]]*\] \[([^\]]*)\] ").unwrap());
static WORD: Lazy<Regex> = Lazy::new(|| Regex::new(r"\S+\s*").unwrap());
static ELIGIBLE: Lazy<Regex> = Lazy::new(|| Regex::new(r"[\p{L}\p{N}]").unwrap());

/// Byte length of the leading metadata block plus any feature tag block.
pub fn protected_prefix_len(text: &str) -> usize {
    let meta = METADATA.find(text).map_or(0, |m| m.end());
    meta + parse_tag_block(&text[meta..]).map_or(0, |(_, len)| len)
}

/// Augments model input for one pass. Pass 0 is always the identity.
/// The metadata block and tag block are never dropped; with
/// `vary_metadata` the source tag is rotated through the synonym list.
pub fn augment_text(text: &str, config: &TtaConfig, pass_index: usize) -> String {
    if pass_index == 0 {
        return text.to_string();
    }
    let split = protected_prefix_len(text);
    let (prefix, body) = text.split_at(split);
    let mut out = String::with_capacity(text.len());
    match METADATA.captures(prefix) {
        Some(caps) if config.vary_metadata => {
            let tag = caps.get(1).unwrap();
            let synonyms = &config.source_synonyms;
            match synonyms.iter().position(|s| s == tag.as_str()) {
                Some(i) => {
                    out.push_str(&prefix[..tag.start()]);
                    out.push_str(&synonyms[(i + pass_index) % synonyms.len()]);
                    out.push_str(&prefix[tag.end()..]);
                }
                None => out.push_str(prefix),
            }
        }
        _ => out.push_str(prefix),
    }
    if config.word_dropout_rate == 0.0 {
        out.push_str(body);
        return out;
    }
    let seed = derive_seed(derive_seed(config.seed, pass_index as u64), fnv1a(text.as_bytes()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Leading whitespace of the body is not part of any word.
    let lead = body.len() - body.trim_start().len();
    out.push_str(&body[..lead]);
    for m in WORD.find_iter(body) {
        let word = m.as_str().trim_end();
        if ELIGIBLE.is_match(word) && rng.random::<f64>() < config.word_dropout_rate {
            continue;
        }
        out.push_str(m.as_str());
    }
    out
}

/// Per-task outcome of (possibly augmented) inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskPrediction {
    pub label: String,
    pub class_index: usize,
    /// Positive-class probability for binary tasks, otherwise the
    /// probability of the predicted class.
    pub probability: f64,
    pub class_probabilities: Vec<f64>,
    /// `probability` as seen by each pass.
    pub per_pass: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub tasks: BTreeMap<Subtask, TaskPrediction>,
}

impl Prediction {
    pub fn task(&self, subtask: Subtask) -> Option<&TaskPrediction> {
        self.tasks.get(&subtask)
    }
}

fn aggregate(
    id: &str,
    passes: &[TaskHeadOutput],
    tasks: &[Subtask],
    config: &TtaConfig,
) -> Prediction {
    let n = passes.len() as f64;
    let mut out = BTreeMap::new();
    for &task in tasks {
        let per_pass_probs: Vec<Vec<f64>> = passes
            .iter()
            .map(|p| softmax(p.logits(task).expect("model head")))
            .collect();
        let k = per_pass_probs[0].len();
        let mut mean = vec![0.0; k];
        for probs in &per_pass_probs {
            for (m, p) in mean.iter_mut().zip(probs) {
                *m += p;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let class_index = if task.is_binary() {
            usize::from(mean[1] >= config.threshold(task))
        } else {
            // First maximum wins ties.
            (0..k).fold(0, |best, c| if mean[c] > mean[best] { c } else { best })
        };
        let report = if task.is_binary() { 1 } else { class_index };
        out.insert(
            task,
            TaskPrediction {
                label: task.class_names()[class_index].to_string(),
                class_index,
                probability: mean[report],
                class_probabilities: mean,
                per_pass: per_pass_probs.iter().map(|p| p[report]).collect(),
            },
        );
    }
    Prediction {
        id: id.to_string(),
        tasks: out,
    }
}

/// One unaugmented forward pass.
pub fn predict(
    record: &PromiseRecord,
    model: &PromiseModel,
    featurizer: &Featurizer,
    config: &TtaConfig,
) -> Result<Prediction> {
    let text = model.prepare_text(record, featurizer)?;
    let out = model.predict_text(&text)?;
    Ok(aggregate(&record.id, &[out], model.tasks(), config))
}

/// Averages probabilities over `config.n_passes` augmented passes.
pub fn predict_tta(
    record: &PromiseRecord,
    model: &PromiseModel,
    featurizer: &Featurizer,
    config: &TtaConfig,
) -> Result<Prediction> {
    config.validate()?;
    let text = model.prepare_text(record, featurizer)?;
    let passes = (0..config.n_passes)
        .map(|pass| model.predict_text(&augment_text(&text, config, pass)))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&record.id, &passes, model.tasks(), config))
}

pub fn predict_all(
    records: &[PromiseRecord],
    model: &PromiseModel,
    featurizer: &Featurizer,
    config: &TtaConfig,
) -> Result<Vec<Prediction>> {
    records
        .iter()
        .map(|r| predict_tta(r, model, featurizer, config))
        .collect()
}

/// Threshold on the 0.01 grid over [0.05, 0.95] maximizing binary F1;
/// ties go to the value closest to 0.5, then the lower one.
pub fn calibrate_threshold(probabilities: &[f64], gold: &[usize]) -> Result<f64> {
    if probabilities.len() != gold.len() || gold.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "calibration inputs",
            expected: format!("{} probabilities", gold.len()),
            actual: probabilities.len().to_string(),
        });
    }
    if let Some(&only) = gold.first().filter(|&&g| gold.iter().all(|&x| x == g)) {
        return Err(Error::SingleClass(only));
    }
    let mut best: Option<(f64, usize)> = None;
    for step in 5..=95usize {
        let t = step as f64 / 100.0;
        let pred: Vec<usize> = probabilities.iter().map(|&p| usize::from(p >= t)).collect();
        let f = f1_score(&pred, gold, Averaging::Binary)?;
        let better = match best {
            None => true,
            Some((bf, bs)) => f > bf || (f == bf && step.abs_diff(50) < bs.abs_diff(50)),
        };
        if better {
            best = Some((f, step));
        }
    }
    Ok(best.expect("non-empty grid").1 as f64 / 100.0)
}
