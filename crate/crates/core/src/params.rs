//! Named parameter tensors and their gradients.

use std::collections::HashMap;

use ndarray::Array2;

use crate::hashing::fnv1a;

pub type Matrix = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub trainable: bool,
    /// Whether decoupled weight decay applies (weights yes; biases and norms no).
    pub decay: bool,
}

/// Flat, insertion-ordered store of named parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on a duplicate name.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix, decay: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            trainable: true,
            decay,
        });
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// FNV-1a over names, shapes and little-endian values of the parameters
    /// accepted by `filter`.
    pub fn checksum(&self, filter: impl Fn(&Param) -> bool) -> u64 {
        let mut bytes = Vec::new();
        for p in self.params.iter().filter(|p| filter(p)) {
            bytes.extend_from_slice(p.name.as_bytes());
            bytes.extend_from_slice(&(p.value.nrows() as u64).to_le_bytes());
            bytes.extend_from_slice(&(p.value.ncols() as u64).to_le_bytes());
            for v in p.value.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fnv1a(&bytes)
    }
}

/// Gradients indexed by parameter; `None` means no gradient reached it.
#[derive(Clone, Debug)]
pub struct Grads {
    slots: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            slots: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: &Matrix) {
        match &mut self.slots[id.0] {
            Some(g) => *g += grad,
            slot @ None => *slot = Some(grad.clone()),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (dst, src) in self.slots.iter_mut().zip(&other.slots) {
            if let Some(src) = src {
                match dst {
                    Some(d) => d.scaled_add(scale, src),
                    None => *dst = Some(src * scale),
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.slots.iter_mut().flatten() {
            *g *= factor;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn global_norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Matrix with entries drawn from N(0, std²).
pub fn normal_matrix(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    use rand_distr::{Distribution, Normal};
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Glorot-normal initialization for an `fan_in × fan_out` weight.
pub fn glorot(rng: &mut rand_chacha::ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    normal_matrix(rng, fan_in, fan_out, (2.0 / (fan_in + fan_out) as f64).sqrt())
}
