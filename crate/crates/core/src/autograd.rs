//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A [`Graph`] records operations as they are evaluated. Parameters are read
//! in place from a [`ParamStore`]; [`Graph::backward`] returns gradients for
//! every trainable parameter (or for all of them, see
//! [`Graph::with_all_gradients`]) and for leaves created with
//! [`Graph::input`].

use std::collections::HashMap;

use ndarray::{s, Array2, Axis};

use crate::params::{Grads, Matrix, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Clamp applied to the gold-class probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

enum Op {
    Constant,
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Matrix),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    MaskedSoftmax(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Transpose(Var),
    ClassLoss {
        logits: Var,
        dlogits: Vec<f64>,
    },
}

struct Node {
    value: Option<Matrix>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    all_params: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Backward {
    pub params: Grads,
    pub inputs: HashMap<Var, Matrix>,
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Loss and its gradient for one example of a softmax classifier.
///
/// Returns `weight * (1 - p)^gamma * -ln p` where `p` is the softmax
/// probability of `label` floored at [`PROB_FLOOR`]; `gamma = 0` is plain
/// cross-entropy.
pub fn class_loss_with_grad(logits: &[f64], label: usize, gamma: f64, weight: f64) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let probs: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    let log_p = (logits[label] - lse).max(PROB_FLOOR.ln());
    let p = log_p.exp();
    let one_minus = (1.0 - p).max(0.0);
    let modulator = if gamma == 0.0 { 1.0 } else { one_minus.powf(gamma) };
    let loss = -weight * modulator * log_p;

    // dL/dp, then through dp/dz_j = p (delta_jy - p_j).
    let focus = if gamma == 0.0 || one_minus == 0.0 {
        0.0
    } else {
        gamma * one_minus.powf(gamma - 1.0) * log_p
    };
    let dl_dp = weight * (focus - modulator / p);
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| dl_dp * p * (if j == label { 1.0 } else { 0.0 } - pj))
        .collect();
    (loss, grad)
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            all_params: false,
        }
    }

    /// Also differentiate frozen parameters (used by gradient checks).
    pub fn with_all_gradients(mut self) -> Self {
        self.all_params = true;
        self
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let needs_grad = self.all_params || self.params.get(id).trainable;
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let n = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), n)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let n = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), n)
    }

    /// Adds a 1×m row to every row of an n×m matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) + self.value(row);
        let n = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), n)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let n = self.needs(a);
        self.push(v, Op::Scale(a, c), n)
    }

    /// Element-wise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, m: Matrix) -> Var {
        let v = self.value(a) * &m;
        let n = self.needs(a);
        self.push(v, Op::MulConst(a, m), n)
    }

    /// `x W + b` with `W` of shape in×out and `b` of shape 1×out.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let y = self.matmul(x, w);
        match b {
            Some(b) => self.add_row(y, b),
            None => y,
        }
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        let n = self.needs(a);
        self.push(v, Op::Gelu(a), n)
    }

    /// Row-wise layer normalization with 1×m gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let m = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / m;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        let n = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            n,
        )
    }

    /// Row-wise softmax over the columns where `key_mask` is true; the other
    /// columns get exactly zero. At least one column must be unmasked.
    pub fn masked_softmax_rows(&mut self, x: Var, key_mask: &[bool]) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.ncols(), key_mask.len());
        assert!(key_mask.iter().any(|&k| k), "all keys masked");
        let mut out = Array2::zeros(xv.raw_dim());
        for (src, mut dst) in xv.rows().into_iter().zip(out.rows_mut()) {
            let max = src
                .iter()
                .zip(key_mask)
                .filter(|(_, &k)| k)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for ((d, s), &k) in dst.iter_mut().zip(src.iter()).zip(key_mask) {
                if k {
                    *d = (s - max).exp();
                    total += *d;
                }
            }
            dst.mapv_inplace(|v| v / total);
        }
        let n = self.needs(x);
        self.push(out, Op::MaskedSoftmax(x), n)
    }

    /// Rows `ids` of a table, in order.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Array2::zeros((ids.len(), t.ncols()));
        for (mut row, &id) in out.rows_mut().into_iter().zip(ids) {
            row.assign(&t.row(id));
        }
        let n = self.needs(table);
        self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            n,
        )
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        let xv = self.value(x);
        let out = xv.select(Axis(0), rows);
        let n = self.needs(x);
        self.push(
            out,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            n,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).slice(s![.., start..start + len]).to_owned();
        let n = self.needs(x);
        self.push(out, Op::SliceCols { x, start }, n)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts differ");
        let n = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), n)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).t().to_owned();
        let n = self.needs(x);
        self.push(out, Op::Transpose(x), n)
    }

    /// Weighted focal / cross-entropy loss of a 1×C logit row; see
    /// [`class_loss_with_grad`].
    pub fn class_loss(&mut self, logits: Var, label: usize, gamma: f64, weight: f64) -> Var {
        let row = self.value(logits);
        assert_eq!(row.nrows(), 1);
        let z: Vec<f64> = row.iter().copied().collect();
        let (loss, dlogits) = class_loss_with_grad(&z, label, gamma, weight);
        let n = self.needs(logits);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::ClassLoss { logits, dlogits },
            n,
        )
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        acc
    }

    /// Back-propagates from a 1×1 output.
    pub fn backward(&self, output: Var) -> Backward {
        assert_eq!(self.value(output).dim(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones((1, 1)));
        let mut params = Grads::zeros_like(self.params);
        let mut inputs = HashMap::new();

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(x) => *x += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Input => {
                    inputs.insert(Var(i), g);
                }
                Op::Param(id) => params.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*row) {
                        acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::MulConst(a, m) => acc(&mut grads, *a, g * m),
                Op::Gelu(a) => {
                    let d = self.value(*a).mapv(gelu_grad);
                    acc(&mut grads, *a, g * d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    if self.needs(*gamma) {
                        acc(
                            &mut grads,
                            *gamma,
                            (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)),
                        );
                    }
                    if self.needs(*beta) {
                        acc(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*x) {
                        let dxhat = &g * self.value(*gamma);
                        let m = xhat.ncols() as f64;
                        let mut dx = Array2::zeros(xhat.raw_dim());
                        for r in 0..xhat.nrows() {
                            let dh = dxhat.row(r);
                            let xh = xhat.row(r);
                            let sum_dh = dh.sum();
                            let sum_dh_xh = dh.dot(&xh);
                            let is = inv_std[r];
                            for c in 0..xhat.ncols() {
                                dx[[r, c]] = is / m * (m * dh[c] - sum_dh - xh[c] * sum_dh_xh);
                            }
                        }
                        acc(&mut grads, *x, dx);
                    }
                }
                Op::MaskedSoftmax(x) => {
                    let y = node.value.as_ref().unwrap();
                    let mut dx = Array2::zeros(y.raw_dim());
                    for r in 0..y.nrows() {
                        let dot = y.row(r).dot(&g.row(r));
                        for c in 0..y.ncols() {
                            dx[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Gather { table, ids } => {
                    let mut dt = Array2::zeros(self.value(*table).raw_dim());
                    for (row, &id) in g.rows().into_iter().zip(ids) {
                        let mut dst = dt.row_mut(id);
                        dst += &row;
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::SelectRows { x, rows } => {
                    let mut dx = Array2::zeros(self.value(*x).raw_dim());
                    for (row, &r) in g.rows().into_iter().zip(rows) {
                        let mut dst = dx.row_mut(r);
                        dst += &row;
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let mut dx = Array2::zeros(self.value(*x).raw_dim());
                    dx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if self.needs(*p) {
                            acc(&mut grads, *p, g.slice(s![.., offset..offset + w]).to_owned());
                        }
                        offset += w;
                    }
                }
                Op::Transpose(x) => acc(&mut grads, *x, g.t().to_owned()),
                Op::ClassLoss { logits, dlogits } => {
                    let scale = g[[0, 0]];
                    let d = Array2::from_shape_fn((1, dlogits.len()), |(_, j)| scale * dlogits[j]);
                    acc(&mut grads, *logits, d);
                }
            }
        }
        Backward { params, inputs }
    }
}
