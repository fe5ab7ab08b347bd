use ndarray::Array2;

use crate::autograd::{Graph, Var};
use crate::encoder::EncodedSequence;
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

/// Learned scoring vector that turns token states into one convex
/// combination. Bias-free unless asked for.
#[derive(Clone, Debug)]
pub struct AttentionPooler {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    hidden_size: usize,
}

/// Graph nodes produced by [`AttentionPooler::forward`].
#[derive(Clone, Debug)]
pub struct PooledVars {
    /// 1×d pooled representation.
    pub pooled: Var,
    /// 1×m weights over the unmasked positions only.
    pub weights: Var,
    pub positions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolOutput {
    pub pooled: Vec<f64>,
    /// One weight per input position; masked positions hold exactly 0.
    pub weights: Vec<f64>,
}

impl AttentionPooler {
    /// Registers `pooler.weight` (d×1, zero so pooling starts uniform) and
    /// optionally `pooler.bias`.
    pub fn new(store: &mut ParamStore, hidden_size: usize, bias: bool) -> Self {
        let weight = store.add("pooler.weight", Array2::zeros((hidden_size, 1)), true);
        let bias = bias.then(|| store.add("pooler.bias", Array2::zeros((1, 1)), false));
        Self {
            weight,
            bias,
            hidden_size,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn forward(&self, g: &mut Graph<'_>, hidden: Var, mask: &[bool]) -> Result<PooledVars> {
        let (n, d) = g.value(hidden).dim();
        if d != self.hidden_size {
            return Err(Error::ShapeMismatch {
                context: "pooler input width",
                expected: self.hidden_size.to_string(),
                actual: d.to_string(),
            });
        }
        if mask.len() != n {
            return Err(Error::ShapeMismatch {
                context: "pooler mask",
                expected: format!("{n} entries"),
                actual: mask.len().to_string(),
            });
        }
        let positions: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if positions.is_empty() {
            return Err(Error::AllMasked);
        }
        // Masked rows are dropped before scoring, so their content cannot
        // reach the output at all.
        let kept = g.select_rows(hidden, &positions);
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        let scores = g.linear(kept, w, b);
        let scores = g.transpose(scores);
        let weights = g.masked_softmax_rows(scores, &vec![true; positions.len()]);
        let pooled = g.matmul(weights, kept);
        Ok(PooledVars {
            pooled,
            weights,
            positions,
        })
    }

    /// Pools one encoded sequence outside of training.
    pub fn pool(&self, store: &ParamStore, seq: &EncodedSequence) -> Result<PoolOutput> {
        let mut g = Graph::new(store);
        let h = g.constant(seq.hidden_states.clone());
        let out = self.forward(&mut g, h, &seq.attention_mask)?;
        let mut weights = vec![0.0; seq.attention_mask.len()];
        for (&pos, &w) in out.positions.iter().zip(g.value(out.weights).iter()) {
            weights[pos] = w;
        }
        Ok(PoolOutput {
            pooled: g.value(out.pooled).iter().copied().collect(),
            weights,
        })
    }
}

/// Convenience wrapper around [`AttentionPooler::pool`].
pub fn attention_pool(
    seq: &EncodedSequence,
    pooler: &AttentionPooler,
    store: &ParamStore,
) -> Result<PoolOutput> {
    pooler.pool(store, seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn seq(h: Array2<f64>, mask: Vec<bool>) -> EncodedSequence {
        let n = h.nrows();
        EncodedSequence {
            hidden_states: h,
            attention_mask: mask,
            token_ids: vec![0; n],
        }
    }

    #[test]
    fn hand_computed_pair() {
        let mut store = ParamStore::new();
        let pooler = AttentionPooler::new(&mut store, 1, false);
        store.get_mut(pooler.weight).value[[0, 0]] = 1.0;
        let out = pooler
            .pool(&store, &seq(array![[1.0], [3.0]], vec![true, true]))
            .unwrap();
        let e1 = 1f64.exp();
        let e3 = 3f64.exp();
        assert!((out.weights[0] - e1 / (e1 + e3)).abs() < 1e-12);
        assert!((out.weights[0] - 0.1192).abs() < 1e-4);
        assert!((out.pooled[0] - 2.7616).abs() < 1e-4);
    }

    #[test]
    fn singleton_and_identical_rows() {
        let mut store = ParamStore::new();
        let pooler = AttentionPooler::new(&mut store, 2, false);
        store.get_mut(pooler.weight).value = array![[0.3], [-1.2]];
        let one = pooler.pool(&store, &seq(array![[0.5, 2.0]], vec![true])).unwrap();
        assert_eq!(one.weights, vec![1.0]);
        assert_eq!(one.pooled, vec![0.5, 2.0]);

        let same = pooler
            .pool(&store, &seq(array![[0.5, 2.0], [0.5, 2.0], [0.5, 2.0]], vec![true; 3]))
            .unwrap();
        for w in &same.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((same.pooled[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn masked_rows_get_zero_weight() {
        let mut store = ParamStore::new();
        let pooler = AttentionPooler::new(&mut store, 1, true);
        let out = pooler
            .pool(&store, &seq(array![[1.0], [9.0], [3.0]], vec![true, false, true]))
            .unwrap();
        assert_eq!(out.weights[1], 0.0);
        assert!((out.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            pooler.pool(&store, &seq(array![[1.0]], vec![false])),
            Err(Error::AllMasked)
        ));
        assert!(pooler.pool(&store, &seq(array![[1.0, 2.0]], vec![true])).is_err());
    }
}
