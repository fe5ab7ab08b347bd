//! Sequence encoders: the [`SequenceEncoder`] interface, a small trainable
//! transformer for desk-scale runs, and the layer-freezing policy.

mod tokenizer;

use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{Linear, Norm};
use crate::params::{normal_matrix, Matrix, ParamId, ParamStore};

pub use crate::layers::{dropout, Mode};

pub use tokenizer::{pre_tokenize, tokenize, Tokenized, Vocab, CLS, PAD, SEP, UNK};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backbone {
    Toy,
    /// A pre-trained checkpoint on local disk, resolved by adapter name.
    External { name: String, path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub max_len: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub dropout: f64,
    pub trainable_top_layers: usize,
    pub backbone: Backbone,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            max_len: 256,
            hidden_size: 32,
            num_layers: 2,
            num_heads: 2,
            ffn_size: 64,
            dropout: 0.1,
            trainable_top_layers: 2,
            backbone: Backbone::Toy,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.max_len < 2 {
            return bad(format!("max_len {} leaves no room for markers", self.max_len));
        }
        if self.hidden_size == 0 || self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return bad(format!(
                "hidden_size {} is not divisible into {} heads",
                self.hidden_size, self.num_heads
            ));
        }
        if self.trainable_top_layers > self.num_layers {
            return bad(format!(
                "trainable_top_layers {} exceeds the {} encoder layers",
                self.trainable_top_layers, self.num_layers
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Where an encoder parameter sits in the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSlot {
    Embeddings,
    /// Zero-based transformer layer.
    Layer(usize),
}

/// Per-token hidden states for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub hidden_states: Matrix,
    pub attention_mask: Vec<bool>,
    pub token_ids: Vec<usize>,
}

/// A trainable encoder whose parameters live in a [`ParamStore`].
pub trait SequenceEncoder: Send + Sync {
    fn hidden_size(&self) -> usize;
    fn num_layers(&self) -> usize;
    fn max_len(&self) -> usize;
    /// `None` for parameters that do not belong to the encoder.
    fn layer_of(&self, id: ParamId) -> Option<LayerSlot>;
    /// Records the forward pass of `ids` on `g`; returns an n×d node.
    fn forward(
        &self,
        g: &mut Graph<'_>,
        ids: &[usize],
        mask: &[bool],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var>;
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    attention_norm: Norm,
    inner: Linear,
    outer: Linear,
    ffn_norm: Norm,
}

/// Post-norm transformer encoder with learned positional embeddings.
pub struct ToyEncoder {
    config: EncoderConfig,
    vocab_size: usize,
    word: ParamId,
    position: ParamId,
    embedding_norm: Norm,
    layers: Vec<Layer>,
    first_param: usize,
    layer_ranges: Vec<std::ops::Range<usize>>,
    end_param: usize,
}

impl ToyEncoder {
    /// Registers the encoder parameters under `encoder.*`.
    pub fn new(
        config: EncoderConfig,
        vocab_size: usize,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_size;
        let first_param = store.len();
        let word = store.add("encoder.embeddings.word", normal_matrix(rng, vocab_size, d, 1.0), true);
        let position = store.add(
            "encoder.embeddings.position",
            normal_matrix(rng, config.max_len, d, 0.1),
            true,
        );
        let embedding_norm = Norm::new(store, "encoder.embeddings.norm", d);
        let mut layers = Vec::new();
        let mut layer_ranges = Vec::new();
        for i in 0..config.num_layers {
            let p = format!("encoder.layer.{i}");
            let start = store.len();
            layers.push(Layer {
                query: Linear::new(store, rng, &format!("{p}.attention.query"), d, d, true),
                key: Linear::new(store, rng, &format!("{p}.attention.key"), d, d, true),
                value: Linear::new(store, rng, &format!("{p}.attention.value"), d, d, true),
                output: Linear::new(store, rng, &format!("{p}.attention.output"), d, d, true),
                attention_norm: Norm::new(store, &format!("{p}.attention.norm"), d),
                inner: Linear::new(store, rng, &format!("{p}.ffn.inner"), d, config.ffn_size, true),
                outer: Linear::new(store, rng, &format!("{p}.ffn.outer"), config.ffn_size, d, true),
                ffn_norm: Norm::new(store, &format!("{p}.ffn.norm"), d),
            });
            layer_ranges.push(start..store.len());
        }
        let end_param = store.len();
        Ok(Self {
            config,
            vocab_size,
            word,
            position,
            embedding_norm,
            layers,
            first_param,
            layer_ranges,
            end_param,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn attention(
        &self,
        g: &mut Graph<'_>,
        layer: &Layer,
        x: Var,
        mask: &[bool],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Var {
        let heads = self.config.num_heads;
        let dh = self.config.hidden_size / heads;
        let q = layer.query.apply(g, x);
        let k = layer.key.apply(g, x);
        let v = layer.value.apply(g, x);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scores = g.scale(scores, scale);
            let weights = g.masked_softmax_rows(scores, mask);
            let weights = dropout(g, weights, self.config.dropout, mode, rng);
            contexts.push(g.matmul(weights, vh));
        }
        let context = if heads == 1 {
            contexts[0]
        } else {
            g.concat_cols(&contexts)
        };
        layer.output.apply(g, context)
    }
}

impl SequenceEncoder for ToyEncoder {
    fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn layer_of(&self, id: ParamId) -> Option<LayerSlot> {
        let i = id.index();
        if !(self.first_param..self.end_param).contains(&i) {
            return None;
        }
        Some(
            self.layer_ranges
                .iter()
                .position(|r| r.contains(&i))
                .map_or(LayerSlot::Embeddings, LayerSlot::Layer),
        )
    }

    fn forward(
        &self,
        g: &mut Graph<'_>,
        ids: &[usize],
        mask: &[bool],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if ids.len() != mask.len() {
            return Err(Error::ShapeMismatch {
                context: "encoder input",
                expected: format!("{} mask entries", ids.len()),
                actual: mask.len().to_string(),
            });
        }
        if ids.is_empty() || ids.len() > self.config.max_len {
            return Err(Error::ShapeMismatch {
                context: "encoder input",
                expected: format!("1..={} tokens", self.config.max_len),
                actual: ids.len().to_string(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::ShapeMismatch {
                context: "token id",
                expected: format!("< {}", self.vocab_size),
                actual: bad.to_string(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::AllMasked);
        }
        let word = g.param(self.word);
        let position = g.param(self.position);
        let tokens = g.gather(word, ids);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = g.gather(position, &positions);
        let x = g.add(tokens, pos);
        let x = self.embedding_norm.apply(g, x);
        let mut x = dropout(g, x, self.config.dropout, mode, rng);
        for layer in &self.layers {
            let attended = self.attention(g, layer, x, mask, mode, rng);
            let attended = dropout(g, attended, self.config.dropout, mode, rng);
            let residual = g.add(x, attended);
            x = layer.attention_norm.apply(g, residual);

            let inner = layer.inner.apply(g, x);
            let inner = g.gelu(inner);
            let outer = layer.outer.apply(g, inner);
            let outer = dropout(g, outer, self.config.dropout, mode, rng);
            let residual = g.add(x, outer);
            x = layer.ffn_norm.apply(g, residual);
        }
        Ok(x)
    }
}

/// Builds the encoder named by `config.backbone`. Only the toy backbone is
/// built in; pre-trained backbones plug in by implementing
/// [`SequenceEncoder`] directly.
pub fn build_encoder(
    config: &EncoderConfig,
    vocab_size: usize,
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn SequenceEncoder>> {
    match &config.backbone {
        Backbone::Toy => Ok(Box::new(ToyEncoder::new(
            config.clone(),
            vocab_size,
            store,
            rng,
        )?)),
        Backbone::External { name, path } => {
            if !path.exists() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "backbone path not found"),
                ));
            }
            Err(Error::BackboneUnavailable(name.clone()))
        }
    }
}

/// Evaluation-mode encoding of one tokenized sequence.
pub fn encode(
    encoder: &dyn SequenceEncoder,
    store: &ParamStore,
    tokens: &Tokenized,
) -> Result<EncodedSequence> {
    let mut g = Graph::new(store);
    // Unused in evaluation mode.
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let h = encoder.forward(&mut g, &tokens.token_ids, &tokens.attention_mask, Mode::Eval, &mut rng)?;
    Ok(EncodedSequence {
        hidden_states: g.value(h).clone(),
        attention_mask: tokens.attention_mask.clone(),
        token_ids: tokens.token_ids.clone(),
    })
}

/// Names of the parameters left trainable and those frozen.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreezePartition {
    pub trainable: Vec<String>,
    pub frozen: Vec<String>,
}

/// Freezes every encoder parameter except the top `trainable_top_layers`
/// layers. Embeddings stay trainable only when all layers are. Parameters
/// outside the encoder (pooler, heads) are always trainable.
pub fn apply_freezing(
    store: &mut ParamStore,
    encoder: &dyn SequenceEncoder,
    trainable_top_layers: usize,
) -> Result<FreezePartition> {
    let depth = encoder.num_layers();
    if trainable_top_layers > depth {
        return Err(Error::InvalidArgument(format!(
            "cannot train the top {trainable_top_layers} layers of a {depth}-layer encoder"
        )));
    }
    let first_trainable = depth - trainable_top_layers;
    let mut partition = FreezePartition::default();
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let trainable = match encoder.layer_of(id) {
            None => true,
            Some(LayerSlot::Embeddings) => trainable_top_layers == depth,
            Some(LayerSlot::Layer(i)) => i >= first_trainable,
        };
        store.set_trainable(id, trainable);
        let name = store.get(id).name.clone();
        if trainable {
            partition.trainable.push(name);
        } else {
            partition.frozen.push(name);
        }
    }
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;

    fn setup(layers: usize, d: usize) -> (ParamStore, ToyEncoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = EncoderConfig {
            hidden_size: d,
            num_layers: layers,
            trainable_top_layers: layers,
            max_len: 16,
            ..EncoderConfig::default()
        };
        let enc = ToyEncoder::new(config, 20, &mut store, &mut rng).unwrap();
        (store, enc)
    }

    fn tokens(ids: &[usize]) -> Tokenized {
        Tokenized {
            token_ids: ids.to_vec(),
            attention_mask: vec![true; ids.len()],
        }
    }

    #[test]
    fn output_shape_and_eval_determinism() {
        let (store, enc) = setup(2, 32);
        let t = tokens(&[2, 5, 6, 7, 3]);
        let a = encode(&enc, &store, &t).unwrap();
        assert_eq!(a.hidden_states.dim(), (5, 32));
        assert_eq!(a, encode(&enc, &store, &t).unwrap());
    }

    #[test]
    fn position_aware() {
        let (store, enc) = setup(2, 32);
        let a = encode(&enc, &store, &tokens(&[5, 6])).unwrap();
        let b = encode(&enc, &store, &tokens(&[6, 5])).unwrap();
        assert_ne!(a.hidden_states.row(0), b.hidden_states.row(1));
    }

    #[test]
    fn masked_positions_do_not_leak() {
        let (store, enc) = setup(2, 16);
        let a = encode(&enc, &store, &tokens(&[2, 5, 3]).padded(5)).unwrap();
        let mut other = tokens(&[2, 5, 3]).padded(5);
        other.token_ids[3] = 9;
        other.token_ids[4] = 11;
        let b = encode(&enc, &store, &other).unwrap();
        for r in 0..3 {
            assert_eq!(a.hidden_states.row(r), b.hidden_states.row(r));
        }
    }

    #[test]
    fn input_validation() {
        let (store, enc) = setup(1, 16);
        let mut g = Graph::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(enc.forward(&mut g, &[2, 3], &[true], Mode::Eval, &mut rng).is_err());
        assert!(enc.forward(&mut g, &[2, 99], &[true, true], Mode::Eval, &mut rng).is_err());
        assert!(matches!(
            enc.forward(&mut g, &[2, 3], &[false, false], Mode::Eval, &mut rng),
            Err(Error::AllMasked)
        ));
        assert!(enc.forward(&mut g, &[2; 17], &[true; 17], Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn freezing_top_two_of_four() {
        let (mut store, enc) = setup(4, 16);
        let head = store.add("head.promise.out.weight", Array2::zeros((16, 2)), true);
        let part = apply_freezing(&mut store, &enc, 2).unwrap();
        let trainable_layer = |i: usize| {
            part.trainable
                .iter()
                .any(|n| n.starts_with(&format!("encoder.layer.{i}.")))
        };
        assert!(!trainable_layer(0) && !trainable_layer(1));
        assert!(trainable_layer(2) && trainable_layer(3));
        assert!(part.frozen.iter().any(|n| n == "encoder.embeddings.word"));
        assert!(store.get(head).trainable);

        let part = apply_freezing(&mut store, &enc, 0).unwrap();
        assert_eq!(part.trainable, vec!["head.promise.out.weight".to_string()]);
        let part = apply_freezing(&mut store, &enc, 4).unwrap();
        assert!(part.frozen.is_empty());
        assert!(apply_freezing(&mut store, &enc, 5).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = EncoderConfig {
            trainable_top_layers: 3,
            num_layers: 2,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            hidden_size: 30,
            num_heads: 4,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
        let yaml = "hidden_size: 64\nbackbone:\n  kind: external\n  name: esg-bert\n  path: /models/esg-bert\n";
        let cfg: EncoderConfig = serde_yaml::from_str(yaml).unwrap();
        assert_eq!(cfg.max_len, 256);
        assert!(matches!(cfg.backbone, Backbone::External { .. }));
    }

    #[test]
    fn external_backbone_without_adapter() {
        let dir = tempfile::tempdir().unwrap();
        let config = EncoderConfig {
            backbone: Backbone::External {
                name: "esg-bert".into(),
                path: dir.path().to_path_buf(),
            },
            ..EncoderConfig::default()
        };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            build_encoder(&config, 10, &mut store, &mut rng),
            Err(Error::BackboneUnavailable(_))
        ));
    }
}
