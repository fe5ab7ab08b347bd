//! Parameterised building blocks shared by the encoder and the heads.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::params::{glorot, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout; identity in evaluation mode.
pub fn dropout(g: &mut Graph<'_>, x: Var, rate: f64, mode: Mode, rng: &mut ChaCha8Rng) -> Var {
    if mode == Mode::Eval || rate == 0.0 {
        return x;
    }
    let keep = 1.0 - rate;
    let shape = g.value(x).raw_dim();
    let mask = Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    g.mul_const(x, mask)
}

/// `x W + b` with a row-vector bias.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(rng, fan_in, fan_out), true);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Array2::zeros((1, fan_out)), false));
        Self { weight, bias }
    }

    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = self.bias.map(|b| g.param(b));
        g.linear(x, w, b)
    }
}

/// Row-wise layer normalisation with learned gain and shift.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Array2::ones((1, d)), false),
            beta: store.add(format!("{name}.beta"), Array2::zeros((1, d)), false),
        }
    }

    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}
