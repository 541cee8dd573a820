//! Reverse-mode gradient tape.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParameterSet`] rather than copied; [`Tape::backward`]
//! consumes the tape and returns gradients for parameters and for leaves
//! created with [`Tape::input`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::neural::{Gradients, ParameterSet, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Slice { input: Var, start: usize },
    Row { table: Var, index: usize },
    SoftmaxXent { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    // `None` for parameters, whose values live in the borrowed set.
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape<'p> {
    params: Option<&'p ParameterSet>,
    nodes: Vec<Node>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    /// A tape with no parameter set; only inputs and constants.
    pub fn new() -> Self {
        Tape {
            params: None,
            nodes: Vec::new(),
        }
    }

    pub fn with_params(params: &'p ParameterSet) -> Self {
        Tape {
            params: Some(params),
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(i)) => self
                .params
                .expect("parameter node without parameter set")
                .at(*i),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Softmax probabilities computed by a cross-entropy node.
    pub fn probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::SoftmaxXent { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let set = self
            .params
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let index = set
            .index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        self.nodes.push(Node {
            value: None,
            op: Op::Param(index),
            needs_grad: true,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// `[m,k] x [k,n] -> [m,n]`, or `[m,k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let (av, bv) = (ta.values(), tb.values());
        let mut out = vec![0.0; m * n];
        if n == 1 {
            for (o, row) in out.iter_mut().zip(av.chunks_exact(k)) {
                *o = dot(row, bv);
            }
        } else {
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for (p, &aip) in av[i * k..(i + 1) * k].iter().enumerate() {
                    if aip != 0.0 {
                        axpy(aip, &bv[p * n..(p + 1) * n], orow);
                    }
                }
            }
        }
        let shape = if sb.len() == 2 { vec![m, n] } else { vec![m] };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let values = self.zip_values("add", a, b, |x, y| x + y)?;
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::from_parts(shape, values), Op::Add(a, b), needs))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let values = self.zip_values("mul", a, b, |x, y| x * y)?;
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::from_parts(shape, values), Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let values = t.values().iter().map(|x| x * factor).collect();
        let shape = t.shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::from_parts(shape, values), Op::Scale(a, factor), needs)
    }

    fn zip_values(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(op, ta.shape(), tb.shape()));
        }
        Ok(ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(&x, &y)| f(x, y))
            .collect())
    }

    /// Concatenates rank-1 tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat of zero tensors"));
        }
        let mut values = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(Error::shape("concat", self.shape(parts[0]), t.shape()));
            }
            values.extend_from_slice(t.values());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::vector(values), Op::Concat(parts.to_vec()), needs))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    fn unary(&mut self, a: Var, f: fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let values = t.values().iter().map(|&x| f(x)).collect();
        let shape = t.shape().to_vec();
        let needs = self.needs(a);
        self.push(Tensor::from_parts(shape, values), op, needs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().sum();
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.values().iter().sum::<f64>() / t.len() as f64;
        let needs = self.needs(a);
        self.push(Tensor::scalar(m), Op::Mean(a), needs)
    }

    /// `len` elements of a rank-1 tensor starting at `start`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 || len == 0 || start + len > t.len() {
            return Err(Error::shape("slice", t.shape(), &[start, len]));
        }
        let values = t.values()[start..start + len].to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::vector(values), Op::Slice { input: a, start }, needs))
    }

    /// Row `index` of a rank-2 table, as a rank-1 tensor (embedding lookup).
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 || index >= t.shape()[0] {
            return Err(Error::shape("row", t.shape(), &[index]));
        }
        let values = t.row(index).to_vec();
        let needs = self.needs(table);
        Ok(self.push(Tensor::vector(values), Op::Row { table, index }, needs))
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 1 {
            return Err(Error::shape("softmax_cross_entropy", t.shape(), &[target]));
        }
        if target >= t.len() {
            return Err(Error::TargetOutOfRange {
                target,
                vocab: t.len(),
            });
        }
        let (probs, log_z) = softmax_with_log_normalizer(t.values());
        let loss = log_z - t.values()[target];
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss.max(0.0)),
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            },
            needs,
        ))
    }

    /// Propagates from the scalar `loss` and returns all leaf gradients.
    pub fn backward(self, loss: Var) -> Result<TapeGradients> {
        let mut params = self.params.map(ParameterSet::zeros_like);
        let mut inputs = HashMap::new();
        let grads = self.propagate(loss, params.as_mut())?;
        for (i, g) in grads.into_iter().enumerate() {
            if let (Some(g), Op::Input) = (g, &self.nodes[i].op) {
                let shape = self.nodes[i].value.as_ref().unwrap().shape().to_vec();
                inputs.insert(Var(i), Tensor::from_parts(shape, g));
            }
        }
        Ok(TapeGradients { params, inputs })
    }

    /// Propagates from `loss` and adds parameter gradients into `into`.
    pub fn backward_into(self, loss: Var, into: &mut Gradients) -> Result<()> {
        if let Some(p) = self.params {
            p.check_same_layout(into, "backward_into")?;
        }
        self.propagate(loss, Some(into))?;
        Ok(())
    }

    fn propagate(
        &self,
        loss: Var,
        mut param_grads: Option<&mut Gradients>,
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let g = match &node.op {
                Op::Input | Op::Constant => continue,
                Op::Param(pi) => {
                    if let (Some(g), Some(out)) = (grads[i].take(), param_grads.as_deref_mut()) {
                        for (o, d) in out.at_mut(*pi).values_mut().iter_mut().zip(&g) {
                            *o += d;
                        }
                    }
                    continue;
                }
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            match &node.op {
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = (ta.shape()[0], ta.shape()[1]);
                    let n = if tb.rank() == 2 { tb.shape()[1] } else { 1 };
                    if self.needs(*a) {
                        let ga = slot(&mut grads, *a, m * k);
                        let bv = tb.values();
                        if n == 1 {
                            for (row, &gi) in ga.chunks_exact_mut(k).zip(&g) {
                                if gi != 0.0 {
                                    axpy(gi, bv, row);
                                }
                            }
                        } else {
                            for (row, grow) in ga.chunks_exact_mut(k).zip(g.chunks_exact(n)) {
                                for (p, r) in row.iter_mut().enumerate() {
                                    *r += dot(grow, &bv[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    }
                    if self.needs(*b) {
                        let gb = slot(&mut grads, *b, k * n);
                        let av = ta.values();
                        if n == 1 {
                            for (row, &gi) in av.chunks_exact(k).zip(&g) {
                                if gi != 0.0 {
                                    axpy(gi, row, gb);
                                }
                            }
                        } else {
                            for (arow, grow) in av.chunks_exact(k).zip(g.chunks_exact(n)) {
                                for (p, &aip) in arow.iter().enumerate() {
                                    axpy(aip, grow, &mut gb[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            axpy(1.0, &g, slot(&mut grads, v, g.len()));
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let bv = self.value(b).values();
                        let ga = slot(&mut grads, a, g.len());
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gi * y;
                        }
                    }
                    if self.needs(b) {
                        let av = self.value(a).values();
                        let gb = slot(&mut grads, b, g.len());
                        for ((o, gi), x) in gb.iter_mut().zip(&g).zip(av) {
                            *o += gi * x;
                        }
                    }
                }
                Op::Scale(a, factor) => {
                    axpy(*factor, &g, slot(&mut grads, *a, g.len()));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        if self.needs(p) {
                            axpy(1.0, &g[offset..offset + n], slot(&mut grads, p, n));
                        }
                        offset += n;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap().values();
                    let ga = slot(&mut grads, *a, g.len());
                    for ((o, gi), s) in ga.iter_mut().zip(&g).zip(y) {
                        *o += gi * s * (1.0 - s);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap().values();
                    let ga = slot(&mut grads, *a, g.len());
                    for ((o, gi), t) in ga.iter_mut().zip(&g).zip(y) {
                        *o += gi * (1.0 - t * t);
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    slot(&mut grads, *a, n).iter_mut().for_each(|o| *o += g[0]);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    let d = g[0] / n as f64;
                    slot(&mut grads, *a, n).iter_mut().for_each(|o| *o += d);
                }
                Op::Slice { input, start } => {
                    let n = self.value(*input).len();
                    let gi = slot(&mut grads, *input, n);
                    axpy(1.0, &g, &mut gi[*start..*start + g.len()]);
                }
                Op::Row { table, index } => {
                    let t = self.value(*table);
                    let cols = t.shape()[1];
                    let gt = slot(&mut grads, *table, t.len());
                    axpy(1.0, &g, &mut gt[index * cols..(index + 1) * cols]);
                }
                Op::SoftmaxXent {
                    logits,
                    target,
                    probs,
                } => {
                    let gl = slot(&mut grads, *logits, probs.len());
                    axpy(g[0], probs, gl);
                    gl[*target] -= g[0];
                }
                Op::Input | Op::Constant | Op::Param(_) => unreachable!(),
            }
        }
        Ok(grads)
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax probabilities and `log Σ exp(logits)`, with max subtraction.
pub fn softmax_with_log_normalizer(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    (probs, max + z.ln())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_with_log_normalizer(logits).0
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let (_, log_z) = softmax_with_log_normalizer(logits);
    logits.iter().map(|l| l - log_z).collect()
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct TapeGradients {
    params: Option<Gradients>,
    inputs: HashMap<Var, Tensor>,
}

impl TapeGradients {
    /// Gradient of an input leaf; `None` if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.inputs.get(&v)
    }

    pub fn params(&self) -> Option<&Gradients> {
        self.params.as_ref()
    }

    pub fn into_params(self) -> Option<Gradients> {
        self.params
    }
}
