use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::{dropout, Linear, Mode, Norm};
use crate::params::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    /// Width of the hidden projection; the input width when unset.
    pub hidden_size: Option<usize>,
    pub dropout: f64,
    pub bias: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden_size: None,
            dropout: 0.1,
            bias: true,
        }
    }
}

/// `W2 · GELU(LN(Dropout(W1 · x)))`, applied in exactly that order.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub inner: Linear,
    pub norm: Norm,
    pub outer: Linear,
    dropout: f64,
    input_size: usize,
    n_classes: usize,
}

impl ClassifierHead {
    /// Registers `{prefix}.inner.*`, `{prefix}.norm.*` and `{prefix}.outer.*`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        input_size: usize,
        n_classes: usize,
        config: &HeadConfig,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::InvalidArgument(format!(
                "head dropout {} outside [0, 1)",
                config.dropout
            )));
        }
        let mid = config.hidden_size.unwrap_or(input_size);
        Ok(Self {
            inner: Linear::new(store, rng, &format!("{prefix}.inner"), input_size, mid, config.bias),
            norm: Norm::new(store, &format!("{prefix}.norm"), mid),
            outer: Linear::new(store, rng, &format!("{prefix}.outer"), mid, n_classes, config.bias),
            dropout: config.dropout,
            input_size,
            n_classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    /// Maps a 1×d row to 1×C logits.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Var> {
        let (rows, d) = g.value(x).dim();
        if rows != 1 || d != self.input_size {
            return Err(Error::ShapeMismatch {
                context: "classifier head input",
                expected: format!("1×{}", self.input_size),
                actual: format!("{rows}×{d}"),
            });
        }
        let z = self.inner.apply(g, x);
        let z = dropout(g, z, self.dropout, mode, rng);
        let z = self.norm.apply(g, z);
        let z = g.gelu(z);
        Ok(self.outer.apply(g, z))
    }

    /// Logits for a plain pooled vector.
    pub fn classify(
        &self,
        store: &ParamStore,
        pooled: &[f64],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let mut g = Graph::new(store);
        let x = g.constant(ndarray::Array2::from_shape_vec((1, pooled.len()), pooled.to_vec()).expect("row"));
        let logits = self.forward(&mut g, x, mode, rng)?;
        Ok(g.value(logits).iter().copied().collect())
    }
}
