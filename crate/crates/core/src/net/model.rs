use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::corpus::{LabelSet, PromiseRecord, Subtask};
use crate::encoder::{apply_freezing, build_encoder, tokenize, EncoderConfig, Mode, SequenceEncoder, Tokenized, Vocab};
use crate::error::{Error, Result};
use crate::featurizer::Featurizer;
use crate::hashing::derive_seed;
use crate::params::{Grads, ParamStore};

use super::{enrich_context, softmax, AttentionPooler, ClassifierHead, HeadConfig, LossConfig};

const INIT_STREAM: u64 = 0x1417;

/// The three architectures: plain encoder heads, heads over feature-tagged
/// text, and the attention-pooled promise/evidence model over
/// metadata-enriched text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Base,
    Feature,
    Combined,
}

impl ModelKind {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "base" => Some(Self::Base),
            "feature" => Some(Self::Feature),
            "combined" => Some(Self::Combined),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub tasks: Vec<Subtask>,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub head: HeadConfig,
    #[serde(default)]
    pub pooler_bias: bool,
    #[serde(default)]
    pub loss: LossConfig,
}

impl ModelConfig {
    pub fn base(subtask: Subtask) -> Self {
        Self::single(ModelKind::Base, subtask)
    }

    pub fn feature(subtask: Subtask) -> Self {
        Self::single(ModelKind::Feature, subtask)
    }

    pub fn combined() -> Self {
        Self {
            kind: ModelKind::Combined,
            tasks: vec![Subtask::Promise, Subtask::Evidence],
            encoder: EncoderConfig::default(),
            head: HeadConfig::default(),
            pooler_bias: false,
            loss: LossConfig::default(),
        }
    }

    fn single(kind: ModelKind, subtask: Subtask) -> Self {
        Self {
            kind,
            tasks: vec![subtask],
            loss: LossConfig::single_task(),
            ..Self::combined()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        match self.kind {
            ModelKind::Combined if self.tasks != [Subtask::Promise, Subtask::Evidence] => {
                Err(Error::InvalidArgument(
                    "the combined model covers exactly subtasks 1 and 2".into(),
                ))
            }
            ModelKind::Base | ModelKind::Feature if self.tasks.len() != 1 => Err(
                Error::InvalidArgument("base and feature models take one subtask".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Model input text for a record: raw for the base model, feature tags
/// for the feature model, page and source markers for the combined one.
pub fn model_input(config: &ModelConfig, record: &PromiseRecord, featurizer: &Featurizer) -> Result<String> {
    match config.kind {
        ModelKind::Base => Ok(record.raw_text.clone()),
        ModelKind::Feature => featurizer.enrich_record(config.tasks[0], record),
        ModelKind::Combined => Ok(enrich_context(record)),
    }
}

/// One tokenized training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub tokens: Tokenized,
    pub labels: LabelSet,
}

/// Per-task logits from one forward pass, plus the shared representation
/// all heads consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskHeadOutput {
    pub pooled: Vec<f64>,
    pub tasks: Vec<Subtask>,
    pub logits: Vec<Vec<f64>>,
}

impl TaskHeadOutput {
    pub fn logits(&self, subtask: Subtask) -> Option<&[f64]> {
        let i = self.tasks.iter().position(|&t| t == subtask)?;
        Some(&self.logits[i])
    }

    pub fn probabilities(&self, subtask: Subtask) -> Option<Vec<f64>> {
        self.logits(subtask).map(softmax)
    }

    pub fn promise_logits(&self) -> Option<&[f64]> {
        self.logits(Subtask::Promise)
    }

    pub fn evidence_logits(&self) -> Option<&[f64]> {
        self.logits(Subtask::Evidence)
    }
}

/// Graph nodes of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub hidden: Var,
    pub pooled: Var,
    pub logits: Vec<Var>,
}

pub struct PromiseModel {
    config: ModelConfig,
    vocab: Vocab,
    seed: u64,
    store: ParamStore,
    encoder: Box<dyn SequenceEncoder>,
    pooler: Option<AttentionPooler>,
    heads: Vec<ClassifierHead>,
    class_weights: Vec<Option<Vec<f64>>>,
}

impl std::fmt::Debug for PromiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PromiseModel")
            .field("kind", &self.config.kind)
            .field("tasks", &self.config.tasks)
            .field("vocab", &self.vocab.len())
            .field("params", &self.store.num_scalars())
            .finish()
    }
}

impl PromiseModel {
    /// Initializes every parameter from `seed` and applies the freezing
    /// policy of `config.encoder`.
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_STREAM));
        let mut store = ParamStore::new();
        let encoder = build_encoder(&config.encoder, vocab.len(), &mut store, &mut rng)?;
        let d = encoder.hidden_size();
        let pooler = (config.kind == ModelKind::Combined)
            .then(|| AttentionPooler::new(&mut store, d, config.pooler_bias));
        let heads = config
            .tasks
            .iter()
            .map(|t| {
                ClassifierHead::new(
                    &mut store,
                    &mut rng,
                    &format!("head.{}", t.key()),
                    d,
                    t.n_classes(),
                    &config.head,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        apply_freezing(&mut store, encoder.as_ref(), config.encoder.trainable_top_layers)?;
        let class_weights = vec![None; config.tasks.len()];
        Ok(Self {
            config,
            vocab,
            seed,
            store,
            encoder,
            pooler,
            heads,
            class_weights,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn tasks(&self) -> &[Subtask] {
        &self.config.tasks
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &dyn SequenceEncoder {
        self.encoder.as_ref()
    }

    pub fn pooler(&self) -> Option<&AttentionPooler> {
        self.pooler.as_ref()
    }

    pub fn head(&self, subtask: Subtask) -> Option<&ClassifierHead> {
        let i = self.task_index(subtask)?;
        Some(&self.heads[i])
    }

    fn task_index(&self, subtask: Subtask) -> Option<usize> {
        self.config.tasks.iter().position(|&t| t == subtask)
    }

    /// Sets per-class loss weights for one task from training class counts.
    pub fn set_class_counts(&mut self, subtask: Subtask, counts: &[usize]) -> Result<()> {
        let i = self
            .task_index(subtask)
            .ok_or_else(|| Error::InvalidArgument(format!("model has no head for {subtask}")))?;
        self.class_weights[i] = self.config.loss.resolve_class_weights(counts)?;
        Ok(())
    }

    pub fn class_weights(&self, subtask: Subtask) -> Option<&[f64]> {
        self.class_weights[self.task_index(subtask)?].as_deref()
    }

    /// See [`model_input`].
    pub fn prepare_text(&self, record: &PromiseRecord, featurizer: &Featurizer) -> Result<String> {
        model_input(&self.config, record, featurizer)
    }

    pub fn tokenize(&self, text: &str) -> Tokenized {
        tokenize(text, &self.vocab, self.config.encoder.max_len)
    }

    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        tokens: &Tokenized,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardVars> {
        let hidden = self
            .encoder
            .forward(g, &tokens.token_ids, &tokens.attention_mask, mode, rng)?;
        let pooled = match &self.pooler {
            Some(pooler) => pooler.forward(g, hidden, &tokens.attention_mask)?.pooled,
            None => g.select_rows(hidden, &[0]),
        };
        // Every head reads the same pooled node.
        let logits = self
            .heads
            .iter()
            .map(|h| h.forward(g, pooled, mode, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardVars {
            hidden,
            pooled,
            logits,
        })
    }

    /// Weighted sum of the task losses whose gold labels are present;
    /// `None` when the example carries no label for any task.
    pub fn example_loss(
        &self,
        g: &mut Graph<'_>,
        example: &Example,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Var>> {
        let out = self.forward(g, &example.tokens, mode, rng)?;
        let gamma = self.config.loss.gamma();
        let mut terms = Vec::new();
        for (i, &task) in self.config.tasks.iter().enumerate() {
            let Some(gold) = example.labels.class_of(task) else {
                continue;
            };
            let n = task.n_classes();
            if gold >= n {
                return Err(Error::LabelOutOfRange { label: gold, classes: n });
            }
            let weight = self.class_weights[i].as_ref().map_or(1.0, |w| w[gold]);
            let loss = g.class_loss(out.logits[i], gold, gamma, weight);
            let task_weight = match (self.config.kind, task) {
                (ModelKind::Combined, Subtask::Promise) => self.config.loss.promise_weight,
                (ModelKind::Combined, Subtask::Evidence) => self.config.loss.evidence_weight,
                _ => 1.0,
            };
            terms.push(if task_weight == 1.0 {
                loss
            } else {
                g.scale(loss, task_weight)
            });
        }
        Ok((!terms.is_empty()).then(|| g.sum(&terms)))
    }

    /// Adds the gradient of one example's loss into `grads` and returns
    /// the loss, or `None` for an unlabelled example.
    pub fn accumulate_gradients(
        &self,
        example: &Example,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        grads: &mut Grads,
    ) -> Result<Option<f64>> {
        let mut g = Graph::new(&self.store);
        let Some(loss) = self.example_loss(&mut g, example, mode, rng)? else {
            return Ok(None);
        };
        let value = g.scalar(loss);
        if value.is_finite() {
            grads.add_scaled(&g.backward(loss).params, 1.0);
        }
        Ok(Some(value))
    }

    /// Evaluation-mode loss without gradients.
    pub fn eval_loss(&self, example: &Example) -> Result<Option<f64>> {
        let mut g = Graph::new(&self.store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self
            .example_loss(&mut g, example, Mode::Eval, &mut rng)?
            .map(|v| g.scalar(v)))
    }

    /// Evaluation-mode logits for already tokenized input.
    pub fn predict_tokens(&self, tokens: &Tokenized) -> Result<TaskHeadOutput> {
        let mut g = Graph::new(&self.store);
        // Dropout is off in evaluation mode, so the generator is never read.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, tokens, Mode::Eval, &mut rng)?;
        Ok(TaskHeadOutput {
            pooled: g.value(out.pooled).iter().copied().collect(),
            tasks: self.config.tasks.clone(),
            logits: out
                .logits
                .iter()
                .map(|&v| g.value(v).iter().copied().collect())
                .collect(),
        })
    }

    pub fn predict_text(&self, text: &str) -> Result<TaskHeadOutput> {
        self.predict_tokens(&self.tokenize(text))
    }

    /// Checksum of the frozen parameters.
    pub fn frozen_checksum(&self) -> u64 {
        self.store.checksum(|p| !p.trainable)
    }
}
