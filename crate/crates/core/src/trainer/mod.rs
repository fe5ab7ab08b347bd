//! Training regimes: cross-validated search plus full-data retraining for
//! the single-task models, and the holdout schedule of the multi-task
//! model.

mod search;

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{holdout_split, stratified_kfold, LabelSelector, PromiseRecord, Subtask};
use crate::encoder::{Mode, Vocab};
use crate::error::{Error, Result};
use crate::eval::{f1_score, Averaging};
use crate::featurizer::Featurizer;
use crate::hashing::derive_seed;
use crate::net::{model_input, Example, ModelConfig, ModelKind, PromiseModel};
use crate::optim::{AdamW, AdamWConfig, CosineSchedule};
use crate::params::{Grads, ParamStore};

pub use search::{
    sample_trial, select_best, SearchSpace, TpeSettings, TrialConfig, TrialResult,
};

const SHUFFLE_STREAM: u64 = 0x5f;
const DROPOUT_STREAM: u64 = 0xd0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub grad_accum_steps: usize,
    pub micro_batch_size: usize,
    pub early_stop_patience: Option<usize>,
    pub seed: u64,
    /// Held-out share for the multi-task schedule.
    pub validation_fraction: f64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 1e-5,
            weight_decay: 0.01,
            warmup_fraction: 0.1,
            grad_accum_steps: 16,
            micro_batch_size: 1,
            early_stop_patience: None,
            seed: 42,
            validation_fraction: 0.1,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if self.grad_accum_steps == 0 || self.micro_batch_size == 0 {
            return bad("grad_accum_steps and micro_batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction {} outside (0, 1)", self.validation_fraction));
        }
        Ok(())
    }

    /// Examples consumed per optimizer update.
    pub fn effective_batch(&self) -> usize {
        self.micro_batch_size * self.grad_accum_steps
    }

    pub fn updates_per_epoch(&self, n_examples: usize) -> usize {
        n_examples.div_ceil(self.effective_batch())
    }
}

/// Patience-based stopping on validation loss; only strict improvements
/// reset the counter.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records the loss of 1-based `epoch`; returns whether to continue.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale < self.patience
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub updates: usize,
}

/// Optimizer state and step counter for one training run.
pub struct Trainer {
    schedule: TrainSchedule,
    optimizer: AdamW,
    lr: CosineSchedule,
    step: usize,
    dropout_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: &PromiseModel, schedule: TrainSchedule, examples_per_epoch: usize) -> Result<Self> {
        schedule.validate()?;
        let total = schedule.epochs * schedule.updates_per_epoch(examples_per_epoch);
        Ok(Self {
            optimizer: AdamW::new(model.store(), schedule.optimizer.clone(), schedule.weight_decay),
            lr: CosineSchedule::new(schedule.learning_rate, total, schedule.warmup_fraction),
            step: 0,
            dropout_rng: ChaCha8Rng::seed_from_u64(derive_seed(schedule.seed, DROPOUT_STREAM)),
            schedule,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn lr_schedule(&self) -> CosineSchedule {
        self.lr
    }

    /// One pass over `examples` in a seeded shuffled order. Each update
    /// averages the gradients of `grad_accum_steps` micro-batches.
    pub fn run_epoch(&mut self, model: &mut PromiseModel, examples: &[Example], epoch: usize) -> Result<EpochStats> {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(self.schedule.seed, SHUFFLE_STREAM + epoch as u64));
        order.shuffle(&mut shuffle);

        let mut loss_sum = 0.0;
        let mut counted = 0usize;
        let mut updates = 0usize;
        for window in order.chunks(self.schedule.effective_batch()) {
            let micro: Vec<&[usize]> = window.chunks(self.schedule.micro_batch_size).collect();
            let mut total = Grads::zeros_like(model.store());
            for batch in &micro {
                let mut grads = Grads::zeros_like(model.store());
                let mut labelled = 0usize;
                for &i in batch.iter() {
                    let Some(loss) =
                        model.accumulate_gradients(&examples[i], Mode::Train, &mut self.dropout_rng, &mut grads)?
                    else {
                        continue;
                    };
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss {
                            epoch,
                            step: self.step + 1,
                            value: loss,
                        });
                    }
                    loss_sum += loss;
                    counted += 1;
                    labelled += 1;
                }
                if labelled > 0 {
                    total.add_scaled(&grads, 1.0 / (labelled * micro.len()) as f64);
                }
            }
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: self.step + 1,
                    value: total.global_norm(),
                });
            }
            self.step += 1;
            updates += 1;
            let lr = self.lr.lr_at(self.step);
            self.optimizer.step(model.store_mut(), &total, lr);
        }
        Ok(EpochStats {
            epoch,
            mean_loss: if counted == 0 { 0.0 } else { loss_sum / counted as f64 },
            updates,
        })
    }
}

/// Vocabulary over the model inputs of `records`.
pub fn build_vocab(config: &ModelConfig, records: &[PromiseRecord], featurizer: &Featurizer) -> Result<Vocab> {
    let texts = records
        .iter()
        .map(|r| model_input(config, r, featurizer))
        .collect::<Result<Vec<_>>>()?;
    Ok(Vocab::build(texts.iter().map(String::as_str), 1))
}

/// Records carrying a gold label for the model's first task.
pub fn labelled_for<'a>(records: &'a [PromiseRecord], config: &ModelConfig) -> Vec<&'a PromiseRecord> {
    let task = config.tasks[0];
    records.iter().filter(|r| r.class_of(task).is_some()).collect()
}

pub fn prepare_examples<'a>(
    model: &PromiseModel,
    records: impl IntoIterator<Item = &'a PromiseRecord>,
    featurizer: &Featurizer,
) -> Result<Vec<Example>> {
    let first = model.tasks()[0];
    records
        .into_iter()
        .filter(|r| r.class_of(first).is_some())
        .map(|r| {
            Ok(Example {
                tokens: model.tokenize(&model.prepare_text(r, featurizer)?),
                labels: r.labels.clone().expect("filtered"),
            })
        })
        .collect()
}

pub fn class_counts(examples: &[Example], subtask: Subtask) -> Vec<usize> {
    let mut counts = vec![0; subtask.n_classes()];
    for e in examples {
        if let Some(c) = e.labels.class_of(subtask) {
            counts[c] += 1;
        }
    }
    counts
}

fn set_class_counts(model: &mut PromiseModel, examples: &[Example]) -> Result<()> {
    for task in model.tasks().to_vec() {
        model.set_class_counts(task, &class_counts(examples, task))?;
    }
    Ok(())
}

/// Mean evaluation-mode loss over the labelled examples.
pub fn validation_loss(model: &PromiseModel, examples: &[Example]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in examples {
        if let Some(l) = model.eval_loss(e)? {
            sum += l;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("validation set has no labelled examples".into()));
    }
    Ok(sum / n as f64)
}

/// Settings shared by every trial of a cross-validated search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSettings {
    pub k: usize,
    pub n_trials: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub space: SearchSpace,
    pub tpe: TpeSettings,
    pub optimizer: AdamWConfig,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            k: 4,
            n_trials: 7,
            max_epochs: 10,
            patience: 2,
            warmup_fraction: 0.1,
            seed: 42,
            space: SearchSpace::default(),
            tpe: TpeSettings::default(),
            optimizer: AdamWConfig::default(),
        }
    }
}

impl CvSettings {
    fn schedule(&self, trial: &TrialConfig, epochs: usize, seed: u64) -> TrainSchedule {
        TrainSchedule {
            epochs,
            learning_rate: trial.learning_rate,
            weight_decay: trial.weight_decay,
            warmup_fraction: self.warmup_fraction,
            grad_accum_steps: 1,
            micro_batch_size: trial.batch_size,
            early_stop_patience: Some(self.patience),
            seed,
            optimizer: self.optimizer.clone(),
            ..TrainSchedule::default()
        }
    }
}

/// Trains one model per stratified fold with early stopping and returns
/// the per-fold best validation losses.
pub fn run_cv_trial(
    records: &[PromiseRecord],
    trial: &TrialConfig,
    config: &ModelConfig,
    featurizer: &Featurizer,
    settings: &CvSettings,
) -> Result<TrialResult> {
    let subtask = config.tasks[0];
    let labelled: Vec<PromiseRecord> = labelled_for(records, config).into_iter().cloned().collect();
    let vocab = build_vocab(config, &labelled, featurizer)?;
    let folds = stratified_kfold(&labelled, settings.k, subtask, settings.seed)?;
    let by_id: HashMap<&str, &PromiseRecord> = labelled.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut losses = Vec::with_capacity(folds.len());
    let mut best_epochs = Vec::with_capacity(folds.len());
    for fold in &folds {
        let fold_seed = derive_seed(settings.seed, fold.fold_index as u64);
        let mut model = PromiseModel::new(config.clone(), vocab.clone(), fold_seed)?;
        let pick = |ids: &[String]| ids.iter().map(|id| by_id[id.as_str()]).collect::<Vec<_>>();
        let train = prepare_examples(&model, pick(&fold.train_ids), featurizer)?;
        let val = prepare_examples(&model, pick(&fold.validation_ids), featurizer)?;
        set_class_counts(&mut model, &train)?;

        let schedule = settings.schedule(trial, settings.max_epochs, fold_seed);
        let mut trainer = Trainer::new(&model, schedule, train.len())?;
        let mut stopper = EarlyStopping::new(settings.patience);
        for epoch in 1..=settings.max_epochs {
            trainer.run_epoch(&mut model, &train, epoch)?;
            let loss = validation_loss(&model, &val)?;
            log::debug!("trial {} fold {} epoch {epoch}: val loss {loss:.5}", trial.trial_index, fold.fold_index);
            if !stopper.observe(epoch, loss) {
                break;
            }
        }
        losses.push(stopper.best_loss());
        best_epochs.push(stopper.best_epoch());
    }
    Ok(TrialResult::new(trial.clone(), losses, best_epochs))
}

/// Runs `settings.n_trials` proposals in sequence, each informed by the
/// results so far. `on_trial` sees every finished trial.
pub fn tune(
    records: &[PromiseRecord],
    config: &ModelConfig,
    featurizer: &Featurizer,
    settings: &CvSettings,
    mut on_trial: impl FnMut(&TrialResult),
) -> Result<Vec<TrialResult>> {
    settings.space.validate()?;
    if settings.n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let mut history = Vec::with_capacity(settings.n_trials);
    for i in 0..settings.n_trials {
        let trial = sample_trial(&settings.space, i, settings.seed, &history, &settings.tpe);
        let result = run_cv_trial(records, &trial, config, featurizer, settings)?;
        on_trial(&result);
        history.push(result);
    }
    Ok(history)
}

/// Lower median of the per-fold best epochs, at least 1.
pub fn median_epoch(best_epochs: &[usize]) -> usize {
    let mut sorted = best_epochs.to_vec();
    sorted.sort_unstable();
    sorted.get(sorted.len().saturating_sub(1) / 2).copied().unwrap_or(1).max(1)
}

pub struct FinalModel {
    pub model: PromiseModel,
    pub epochs: usize,
    pub history: Vec<EpochStats>,
}

/// Retrains on every labelled record for the median best epoch count of
/// the chosen trial.
pub fn train_final(
    records: &[PromiseRecord],
    best: &TrialResult,
    config: &ModelConfig,
    featurizer: &Featurizer,
    settings: &CvSettings,
) -> Result<FinalModel> {
    let epochs = median_epoch(&best.fold_best_epochs);
    let schedule = settings.schedule(&best.config, epochs, settings.seed);
    train_single_task(records, config, &schedule, featurizer)
}

/// Trains a base or feature model on every record labelled for its task
/// for exactly `schedule.epochs` epochs.
pub fn train_single_task(
    records: &[PromiseRecord],
    config: &ModelConfig,
    schedule: &TrainSchedule,
    featurizer: &Featurizer,
) -> Result<FinalModel> {
    if config.kind == ModelKind::Combined {
        return Err(Error::InvalidArgument("the combined model trains with train_multitask".into()));
    }
    let labelled: Vec<PromiseRecord> = labelled_for(records, config).into_iter().cloned().collect();
    if labelled.is_empty() {
        return Err(Error::InvalidArgument(format!("no records labelled for {}", config.tasks[0])));
    }
    let vocab = build_vocab(config, &labelled, featurizer)?;
    let mut model = PromiseModel::new(config.clone(), vocab, schedule.seed)?;
    let examples = prepare_examples(&model, &labelled, featurizer)?;
    set_class_counts(&mut model, &examples)?;
    let mut trainer = Trainer::new(&model, schedule.clone(), examples.len())?;
    let history = (1..=schedule.epochs)
        .map(|e| trainer.run_epoch(&mut model, &examples, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(FinalModel {
        model,
        epochs: schedule.epochs,
        history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub promise_f1: f64,
    pub evidence_f1: f64,
    pub mean_f1: f64,
}

/// Index of the first maximum.
pub fn best_epoch_index(scores: &[f64]) -> Option<usize> {
    (0..scores.len()).fold(None, |best, i| match best {
        Some(b) if scores[b] >= scores[i] => Some(b),
        _ => Some(i),
    })
}

pub struct MultitaskOutcome {
    pub model: PromiseModel,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub history: Vec<EpochReport>,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

/// Promise and evidence F1 (positive class, 0.5 threshold) on `examples`.
pub fn multitask_f1(model: &PromiseModel, examples: &[Example]) -> Result<(f64, f64)> {
    let mut pairs: [(Vec<usize>, Vec<usize>); 2] = Default::default();
    for e in examples {
        let out = model.predict_tokens(&e.tokens)?;
        for (slot, task) in [Subtask::Promise, Subtask::Evidence].into_iter().enumerate() {
            if let (Some(gold), Some(p)) = (e.labels.class_of(task), out.probabilities(task)) {
                pairs[slot].0.push(usize::from(p[1] >= 0.5));
                pairs[slot].1.push(gold);
            }
        }
    }
    let score = |(pred, gold): &(Vec<usize>, Vec<usize>)| {
        if gold.is_empty() {
            Ok(0.0)
        } else {
            f1_score(pred, gold, Averaging::Binary)
        }
    };
    Ok((score(&pairs[0])?, score(&pairs[1])?))
}

/// Stratified holdout, fixed epoch budget, and the weights of the epoch
/// with the best mean of promise and evidence F1 (earliest on ties).
pub fn train_multitask(
    records: &[PromiseRecord],
    config: &ModelConfig,
    schedule: &TrainSchedule,
    featurizer: &Featurizer,
) -> Result<MultitaskOutcome> {
    if config.kind != ModelKind::Combined {
        return Err(Error::InvalidArgument("multi-task training needs the combined model".into()));
    }
    schedule.validate()?;
    let labelled: Vec<PromiseRecord> = records.iter().filter(|r| r.labels.is_some()).cloned().collect();
    let (train_ids, validation_ids) = holdout_split(
        &labelled,
        1.0 - schedule.validation_fraction,
        LabelSelector::PromiseEvidence,
        schedule.seed,
    )?;
    if validation_ids.is_empty() {
        return Err(Error::InvalidArgument("holdout split left no validation records".into()));
    }
    let vocab = build_vocab(config, &labelled, featurizer)?;
    let mut model = PromiseModel::new(config.clone(), vocab, schedule.seed)?;
    let val_set: HashSet<&str> = validation_ids.iter().map(String::as_str).collect();
    let (val_records, train_records): (Vec<&PromiseRecord>, Vec<&PromiseRecord>) =
        labelled.iter().partition(|r| val_set.contains(r.id.as_str()));
    let train = prepare_examples(&model, train_records, featurizer)?;
    let val = prepare_examples(&model, val_records, featurizer)?;
    set_class_counts(&mut model, &train)?;

    let mut trainer = Trainer::new(&model, schedule.clone(), train.len())?;
    let mut history = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=schedule.epochs {
        let stats = trainer.run_epoch(&mut model, &train, epoch)?;
        let (promise_f1, evidence_f1) = multitask_f1(&model, &val)?;
        let mean_f1 = (promise_f1 + evidence_f1) / 2.0;
        log::info!(
            "epoch {epoch}: loss {:.4} promise F1 {promise_f1:.4} evidence F1 {evidence_f1:.4}",
            stats.mean_loss
        );
        history.push(EpochReport {
            epoch,
            train_loss: stats.mean_loss,
            promise_f1,
            evidence_f1,
            mean_f1,
        });
        if best.as_ref().is_none_or(|(score, _, _)| mean_f1 > *score) {
            best = Some((mean_f1, epoch, model.store().clone()));
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch");
    *model.store_mut() = weights;
    Ok(MultitaskOutcome {
        model,
        best_epoch,
        history,
        train_ids,
        validation_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_arithmetic() {
        let mut s = EarlyStopping::new(2);
        let cont: Vec<bool> = [1.0, 0.9, 0.95, 0.97].iter().enumerate().map(|(i, &l)| s.observe(i + 1, l)).collect();
        assert_eq!(cont, vec![true, true, true, false]);
        assert_eq!(s.best_loss(), 0.9);
        assert_eq!(s.best_epoch(), 2);
        let mut s = EarlyStopping::new(2);
        assert!(s.observe(1, 1.0));
        assert!(s.observe(2, 1.0));
        assert!(!s.observe(3, 1.0));
    }

    #[test]
    fn epoch_selection() {
        assert_eq!(best_epoch_index(&[0.5, 0.7, 0.6, 0.7, 0.65]), Some(1));
        assert_eq!(best_epoch_index(&[]), None);
        assert_eq!(median_epoch(&[3, 1, 4, 2]), 2);
        assert_eq!(median_epoch(&[5, 2, 3]), 3);
        assert_eq!(median_epoch(&[]), 1);
    }

    #[test]
    fn schedule_validation() {
        assert!(TrainSchedule::default().validate().is_ok());
        let bad = TrainSchedule {
            grad_accum_steps: 0,
            ..TrainSchedule::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainSchedule::default().updates_per_epoch(33), 3);
    }
}
