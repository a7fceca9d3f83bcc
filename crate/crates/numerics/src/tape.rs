//! Reverse-mode gradient tape.
//!
//! Every forward op appends one node whose parents already sit on the tape,
//! so the node vector is a topological order by construction and the
//! backward pass is a single reverse sweep. A tape supports exactly one
//! backward pass; `reset` clears it for the next training step.

use std::collections::{HashMap, HashSet};

use crate::error::{NumericsError, Result};
use crate::param::{Gradients, ParamId, ParamStore};
use crate::tensor::{axis_split, broadcast_index_map, gemm_nn, gemm_nt, gemm_tn, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
    Abs,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    Shift(Var),
    Powf(Var, f64),
    SumAll(Var),
    SumAxis(Var, usize),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    LogSumExp(Var, usize),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
    Bce { probs: Var, targets: Vec<f64> },
    Reshape(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Gather { table: Var, ids: Vec<usize> },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    frozen: HashSet<ParamId>,
    grad_enabled: bool,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            frozen: HashSet::new(),
            grad_enabled: true,
            grads: Vec::new(),
            backward_done: false,
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape on which no parameter requires gradient (inference).
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::default()
        }
    }

    /// Parameters in `ids` load as constants on this tape, across resets.
    pub fn freeze(&mut self, ids: impl IntoIterator<Item = ParamId>) {
        self.frozen.extend(ids);
    }

    /// Drops every recorded node so the tape can serve a new step. Frozen
    /// parameters and the gradient mode are kept.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.params.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`, if `v`
    /// participated in it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub(crate) fn push(&mut self, op: &'static str, value: Tensor, node: Op, rg: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite { op });
        }
        self.nodes.push(Node {
            value,
            op: node,
            requires_grad: rg,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub(crate) fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push("leaf", value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Copies `v` into a fresh leaf that never receives gradient.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.constant(value)
    }

    /// Loads a stored parameter. Repeated loads on one tape share a node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: store.get(id).clone(),
            op: Op::Param,
            requires_grad: self.grad_enabled && !self.frozen.contains(&id),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    /// Trainable parameters loaded onto this tape.
    pub fn loaded_params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.iter().filter(|(_, v)| self.rg(**v)).map(|(id, _)| *id)
    }

    /// Runs the reverse sweep from a scalar `loss`.
    ///
    /// Returns gradients for every trainable parameter loaded on the tape;
    /// parameters the loss does not depend on get zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(NumericsError::DoubleBackward);
        }
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(NumericsError::NonScalarLoss(shape));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(&shape, 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut out = Gradients::default();
        for (&id, &v) in self.params.iter().filter(|(_, v)| self.rg(**v)) {
            let g = grads[v.0]
                .clone()
                .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
            out.map.insert(id, g);
        }
        self.grads = grads;
        Ok(out)
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm_nt(g.data(), bv.data(), m, n, k, &mut ga);
                    accumulate(grads, *a, Tensor::new(vec![m, k], ga)?);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm_tn(av.data(), g.data(), k, m, n, &mut gb);
                    accumulate(grads, *b, Tensor::new(vec![k, n], gb)?);
                }
            }
            Op::MatMulNt(a, b) => {
                // y = a · bᵀ with a [m×k], b [n×k]
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[0];
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm_nn(g.data(), bv.data(), m, n, k, &mut ga);
                    accumulate(grads, *a, Tensor::new(vec![m, k], ga)?);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; n * k];
                    gemm_tn(g.data(), av.data(), n, m, k, &mut gb);
                    accumulate(grads, *b, Tensor::new(vec![n, k], gb)?);
                }
            }
            Op::Transpose(a) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.transpose()?);
                }
            }
            Op::Binary(kind, a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let ma = broadcast_index_map(av.shape(), y.shape());
                let mb = broadcast_index_map(bv.shape(), y.shape());
                let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                if self.rg(*a) {
                    let mut ga = vec![0.0; av.len()];
                    for k in 0..gd.len() {
                        ga[ma[k]] += match kind {
                            Binary::Add | Binary::Sub => gd[k],
                            Binary::Mul => gd[k] * bd[mb[k]],
                            Binary::Div => gd[k] / bd[mb[k]],
                        };
                    }
                    accumulate(grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; bv.len()];
                    for k in 0..gd.len() {
                        gb[mb[k]] += match kind {
                            Binary::Add => gd[k],
                            Binary::Sub => -gd[k],
                            Binary::Mul => gd[k] * ad[ma[k]],
                            Binary::Div => -gd[k] * ad[ma[k]] / (bd[mb[k]] * bd[mb[k]]),
                        };
                    }
                    accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
                }
            }
            Op::Unary(kind, a) => {
                if self.rg(*a) {
                    let x = self.value(*a).data();
                    let yd = y.data();
                    let gd = g.data();
                    let ga: Vec<f64> = (0..gd.len())
                        .map(|k| {
                            gd[k]
                                * match kind {
                                    Unary::Sigmoid => yd[k] * (1.0 - yd[k]),
                                    Unary::Tanh => 1.0 - yd[k] * yd[k],
                                    Unary::Relu => {
                                        if x[k] > 0.0 {
                                            1.0
                                        } else {
                                            0.0
                                        }
                                    }
                                    Unary::Exp => yd[k],
                                    Unary::Log => 1.0 / x[k],
                                    Unary::Abs => {
                                        if x[k] > 0.0 {
                                            1.0
                                        } else if x[k] < 0.0 {
                                            -1.0
                                        } else {
                                            0.0
                                        }
                                    }
                                    Unary::Neg => -1.0,
                                }
                        })
                        .collect();
                    accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?);
                }
            }
            Op::Scale(a, s) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.map(|v| v * s));
                }
            }
            Op::Shift(a) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
            }
            Op::Powf(a, p) => {
                if self.rg(*a) {
                    let x = self.value(*a).data();
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(x)
                        .map(|(gv, xv)| gv * p * xv.powf(p - 1.0))
                        .collect();
                    accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?);
                }
            }
            Op::SumAll(a) => {
                if self.rg(*a) {
                    accumulate(grads, *a, Tensor::full(self.value(*a).shape(), g.item()));
                }
            }
            Op::SumAxis(a, axis) => {
                if self.rg(*a) {
                    let shape = self.value(*a).shape().to_vec();
                    let (outer, len, inner) = axis_split(&shape, *axis)?;
                    let mut ga = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        for j in 0..len {
                            for i in 0..inner {
                                ga[(o * len + j) * inner + i] = g.data()[o * inner + i];
                            }
                        }
                    }
                    accumulate(grads, *a, Tensor::new(shape, ga)?);
                }
            }
            Op::Softmax(a, axis) => {
                if self.rg(*a) {
                    let (outer, len, inner) = axis_split(y.shape(), *axis)?;
                    let (yd, gd) = (y.data(), g.data());
                    let mut ga = vec![0.0; yd.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| (o * len + j) * inner + i;
                            let dot: f64 = (0..len).map(|j| gd[at(j)] * yd[at(j)]).sum();
                            for j in 0..len {
                                ga[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                            }
                        }
                    }
                    accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?);
                }
            }
            Op::LogSoftmax(a, axis) => {
                if self.rg(*a) {
                    let (outer, len, inner) = axis_split(y.shape(), *axis)?;
                    let (yd, gd) = (y.data(), g.data());
                    let mut ga = vec![0.0; yd.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| (o * len + j) * inner + i;
                            let total: f64 = (0..len).map(|j| gd[at(j)]).sum();
                            for j in 0..len {
                                ga[at(j)] = gd[at(j)] - yd[at(j)].exp() * total;
                            }
                        }
                    }
                    accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?);
                }
            }
            Op::LogSumExp(a, axis) => {
                if self.rg(*a) {
                    let xv = self.value(*a);
                    let (outer, len, inner) = axis_split(xv.shape(), *axis)?;
                    let (xd, yd, gd) = (xv.data(), y.data(), g.data());
                    let mut ga = vec![0.0; xd.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let r = o * inner + i;
                            for j in 0..len {
                                let at = (o * len + j) * inner + i;
                                ga[at] = gd[r] * (xd[at] - yd[r]).exp();
                            }
                        }
                    }
                    accumulate(grads, *a, Tensor::new(xv.shape().to_vec(), ga)?);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if self.rg(*logits) {
                    let n = targets.len();
                    let c = probs.shape()[1];
                    let scale = g.item() / n as f64;
                    let mut ga = probs.data().to_vec();
                    for (r, &t) in targets.iter().enumerate() {
                        ga[r * c + t] -= 1.0;
                    }
                    ga.iter_mut().for_each(|v| *v *= scale);
                    accumulate(grads, *logits, Tensor::new(probs.shape().to_vec(), ga)?);
                }
            }
            Op::Bce { probs, targets } => {
                if self.rg(*probs) {
                    let pv = self.value(*probs);
                    let n = targets.len() as f64;
                    let ga: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&p, &t)| {
                            if p < crate::ops::BCE_CLAMP || p > 1.0 - crate::ops::BCE_CLAMP {
                                0.0
                            } else {
                                g.item() * (p - t) / (p * (1.0 - p)) / n
                            }
                        })
                        .collect();
                    accumulate(grads, *probs, Tensor::new(pv.shape().to_vec(), ga)?);
                }
            }
            Op::Reshape(a) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.reshaped(self.value(*a).shape())?);
                }
            }
            Op::Concat { parts, axis } => {
                let cols = y.shape()[1];
                let mut offset = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let (pr, pc) = (pv.shape()[0], pv.shape()[1]);
                    if self.rg(*p) {
                        let mut gp = Vec::with_capacity(pr * pc);
                        if *axis == 0 {
                            gp.extend_from_slice(&g.data()[offset * cols..(offset + pr) * cols]);
                        } else {
                            for r in 0..pr {
                                gp.extend_from_slice(&g.data()[r * cols + offset..r * cols + offset + pc]);
                            }
                        }
                        accumulate(grads, *p, Tensor::new(vec![pr, pc], gp)?);
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { src, axis, start } => {
                if self.rg(*src) {
                    let sv = self.value(*src);
                    let (sr, sc) = (sv.shape()[0], sv.shape()[1]);
                    let (yr, yc) = (y.shape()[0], y.shape()[1]);
                    let mut gs = vec![0.0; sr * sc];
                    for r in 0..yr {
                        for c in 0..yc {
                            let (rr, cc) = if *axis == 0 { (r + start, c) } else { (r, c + start) };
                            gs[rr * sc + cc] = g.data()[r * yc + c];
                        }
                    }
                    accumulate(grads, *src, Tensor::new(vec![sr, sc], gs)?);
                }
            }
            Op::Gather { table, ids } => {
                if self.rg(*table) {
                    let tv = self.value(*table);
                    let d = tv.shape()[1];
                    let mut gt = vec![0.0; tv.len()];
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            gt[id * d + c] += g.data()[r * d + c];
                        }
                    }
                    accumulate(grads, *table, Tensor::new(tv.shape().to_vec(), gt)?);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, contrib: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, c) in existing.data_mut().iter_mut().zip(contrib.data()) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}
