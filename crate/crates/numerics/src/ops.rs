//! Forward operations recorded on the [`Tape`].

use crate::error::{NumericsError, Result};
use crate::tape::{Binary, Op, Tape, Unary, Var};
use crate::tensor::{axis_split, broadcast_index_map, broadcast_shape, gemm_nt, Tensor};

/// Probabilities entering binary cross-entropy are clamped this far from 0 and 1.
pub const BCE_CLAMP: f64 = 1e-7;

/// Pointwise operation kinds accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
}

impl Tape {
    pub fn elementwise(&mut self, kind: ElementwiseKind, inputs: &[Var]) -> Result<Var> {
        let arity = match kind {
            ElementwiseKind::Add | ElementwiseKind::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(NumericsError::ShapeMismatch {
                op: "elementwise",
                lhs: vec![arity],
                rhs: vec![inputs.len()],
            });
        }
        match kind {
            ElementwiseKind::Add => self.add(inputs[0], inputs[1]),
            ElementwiseKind::Mul => self.mul(inputs[0], inputs[1]),
            ElementwiseKind::Sigmoid => self.sigmoid(inputs[0]),
            ElementwiseKind::Tanh => self.tanh(inputs[0]),
            ElementwiseKind::Relu => self.relu(inputs[0]),
            ElementwiseKind::Exp => self.exp(inputs[0]),
            ElementwiseKind::Log => self.log(inputs[0]),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", out, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.as_matrix("matmul_nt")?;
        let (n, k2) = bv.as_matrix("matmul_nt")?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_nt",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(av.data(), bv.data(), m, k, n, &mut out);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul_nt", Tensor::new(vec![m, n], out)?, Op::MatMulNt(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.rg(a);
        self.push("transpose", out, Op::Transpose(a), rg)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var, name: &'static str) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| NumericsError::ShapeMismatch {
            op: name,
            lhs: av.shape().to_vec(),
            rhs: bv.shape().to_vec(),
        })?;
        let (ad, bd) = (av.data(), bv.data());
        let data: Vec<f64> = if av.shape() == bv.shape() {
            ad.iter().zip(bd).map(|(&x, &y)| apply_binary(kind, x, y)).collect()
        } else {
            let ma = broadcast_index_map(av.shape(), &shape);
            let mb = broadcast_index_map(bv.shape(), &shape);
            ma.iter()
                .zip(&mb)
                .map(|(&i, &j)| apply_binary(kind, ad[i], bd[j]))
                .collect()
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(name, Tensor::new(shape, data)?, Op::Binary(kind, a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b, "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b, "div")
    }

    fn unary(&mut self, kind: Unary, a: Var, name: &'static str) -> Result<Var> {
        let x = self.value(a);
        if kind == Unary::Log && x.data().iter().any(|&v| v <= 0.0) {
            return Err(NumericsError::Domain { op: "log" });
        }
        let out = x.map(|v| match kind {
            Unary::Sigmoid => sigmoid(v),
            Unary::Tanh => v.tanh(),
            Unary::Relu => v.max(0.0),
            Unary::Exp => v.exp(),
            Unary::Log => v.ln(),
            Unary::Abs => v.abs(),
            Unary::Neg => -v,
        });
        let rg = self.rg(a);
        self.push(name, out, Op::Unary(kind, a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a, "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a, "relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a, "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a, "log")
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Abs, a, "abs")
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Neg, a, "neg")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push("scale", out, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v + s);
        let rg = self.rg(a);
        self.push("add_scalar", out, Op::Shift(a), rg)
    }

    /// Elementwise power; the base must be positive when `p` is fractional.
    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v.powf(p));
        let rg = self.rg(a);
        self.push("powf", out, Op::Powf(a, p), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push("sum", out, Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sum along `axis`, keeping it as a length-1 dimension.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        let (outer, len, inner) = axis_split(x.shape(), axis)?;
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += x.data()[(o * len + j) * inner + i];
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = 1;
        let rg = self.rg(a);
        self.push("sum_axis", Tensor::new(shape, out)?, Op::SumAxis(a, axis), rg)
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let len = axis_split(self.value(a).shape(), axis)?.1.max(1);
        let s = self.sum_axis(a, axis)?;
        self.scale(s, 1.0 / len as f64)
    }

    /// Numerically stable softmax along `axis` (max-subtracted).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        let out = softmax_values(x, axis)?;
        let rg = self.rg(a);
        self.push("softmax", out, Op::Softmax(a, axis), rg)
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        let lse = logsumexp_values(x, axis)?;
        let (outer, len, inner) = axis_split(x.shape(), axis)?;
        let mut out = x.data().to_vec();
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[(o * len + j) * inner + i] -= lse.data()[o * inner + i];
                }
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.rg(a);
        self.push("log_softmax", out, Op::LogSoftmax(a, axis), rg)
    }

    /// `log Σ exp` along `axis`, keeping it as a length-1 dimension.
    pub fn logsumexp(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = logsumexp_values(self.value(a), axis)?;
        let rg = self.rg(a);
        self.push("logsumexp", out, Op::LogSumExp(a, axis), rg)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` `[n×c]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (n, c) = x.as_matrix("cross_entropy")?;
        if n != targets.len() || n == 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                lhs: x.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(NumericsError::TargetOutOfRange { target: t, classes: c });
        }
        let probs = softmax_values(x, 1)?;
        let lse = logsumexp_values(x, 1)?;
        let loss: f64 = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| lse.data()[r] - x.data()[r * c + t])
            .sum::<f64>()
            / n as f64;
        let rg = self.rg(logits);
        self.push(
            "cross_entropy",
            Tensor::scalar(loss.max(0.0)),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Mean binary cross-entropy. Probabilities are clamped to
    /// `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &Tensor) -> Result<Var> {
        let p = self.value(probs);
        if p.shape() != targets.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "binary_cross_entropy",
                lhs: p.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        if p.is_empty() {
            return Err(NumericsError::ShapeMismatch {
                op: "binary_cross_entropy",
                lhs: p.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let n = p.len() as f64;
        let loss: f64 = p
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&pv, &t)| {
                let pv = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(t * pv.ln() + (1.0 - t) * (1.0 - pv).ln())
            })
            .sum::<f64>()
            / n;
        let rg = self.rg(probs);
        self.push(
            "binary_cross_entropy",
            Tensor::scalar(loss),
            Op::Bce {
                probs,
                targets: targets.data().to_vec(),
            },
            rg,
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshaped(shape)?;
        let rg = self.rg(a);
        self.push("reshape", out, Op::Reshape(a), rg)
    }

    /// Concatenates matrices along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if axis > 1 {
            return Err(NumericsError::Axis { axis, rank: 2 });
        }
        let first = self.value(*parts.first().ok_or(NumericsError::ShapeMismatch {
            op: "concat",
            lhs: vec![],
            rhs: vec![],
        })?);
        let (_, fc) = first.as_matrix("concat")?;
        let fr = first.shape()[0];
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            let (r, c) = v.as_matrix("concat")?;
            let ok = if axis == 0 { c == fc } else { r == fr };
            if !ok {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            if axis == 0 {
                rows += r;
                cols = c;
            } else {
                rows = r;
                cols += c;
            }
        }
        let mut data = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
        } else {
            for r in 0..rows {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(r));
                }
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            "concat",
            Tensor::new(vec![rows, cols], data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        )
    }

    /// Contiguous slice `[start, start+len)` of a matrix along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.as_matrix("slice")?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start + len > extent {
            return Err(NumericsError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                len: extent,
            });
        }
        let (out, shape) = if axis == 0 {
            (x.data()[start * c..(start + len) * c].to_vec(), vec![len, c])
        } else {
            let mut d = Vec::with_capacity(r * len);
            for row in 0..r {
                d.extend_from_slice(&x.row(row)[start..start + len]);
            }
            (d, vec![r, len])
        };
        let rg = self.rg(a);
        self.push("slice", Tensor::new(shape, out)?, Op::Slice { src: a, axis, start }, rg)
    }

    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        self.slice(a, 0, index, 1)
    }

    /// Rows of `table` `[V×d]` selected by `ids`, giving `[ids.len()×d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, d) = t.as_matrix("gather_rows")?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumericsError::IndexOutOfRange {
                    op: "gather_rows",
                    index: id,
                    len: v,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        let rg = self.rg(table);
        self.push(
            "gather_rows",
            Tensor::new(vec![ids.len(), d], out)?,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// `x · w + b` for `x [n×i]`, `w [i×o]`, `b [o]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Row-wise layer normalization with learned gain and bias of width `d`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let mu = self.mean_axis(x, 1)?;
        let centered = self.sub(x, mu)?;
        let sq = self.mul(centered, centered)?;
        let var = self.mean_axis(sq, 1)?;
        let shifted = self.add_scalar(var, eps)?;
        let inv = self.powf(shifted, -0.5)?;
        let normed = self.mul(centered, inv)?;
        let scaled = self.mul(normed, gain)?;
        self.add(scaled, bias)
    }
}

fn apply_binary(kind: Binary, x: f64, y: f64) -> f64 {
    match kind {
        Binary::Add => x + y,
        Binary::Sub => x - y,
        Binary::Mul => x * y,
        Binary::Div => x / y,
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logsumexp_values(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = axis_split(x.shape(), axis)?;
    let d = x.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let m = (0..len).map(|j| d[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (0..len).map(|j| (d[at(j)] - m).exp()).sum();
            out[o * inner + i] = m + s.ln();
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = 1;
    Tensor::new(shape, out)
}

pub(crate) fn softmax_values(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = axis_split(x.shape(), axis)?;
    let d = x.data();
    let mut out = vec![0.0; d.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let m = (0..len).map(|j| d[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..len {
                let e = (d[at(j)] - m).exp();
                out[at(j)] = e;
                s += e;
            }
            for j in 0..len {
                out[at(j)] /= s;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}
