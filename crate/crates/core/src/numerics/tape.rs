//! Recorded-tape reverse-mode differentiation over [`Tensor2`] values.
//!
//! The primitive set is fixed (matmul, add, broadcast bias, relu, layer norm,
//! dropout mask, row softmax, column concat/slice, row scaling, row gather,
//! fused softmax cross-entropy, mean squared error, sum). Each primitive
//! caches what its backward rule needs at record time.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;

use super::tensor::{cross_entropy_parts, layer_norm_parts, Tensor2};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Propagate(Arc<Tensor2>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor2,
        inv_std: Vec<f64>,
    },
    Dropout {
        x: Var,
        mask: Tensor2,
    },
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCol(Var, usize),
    ScaleRows(Var, Var),
    GatherRows(Var, Vec<usize>),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor2,
    },
    Mse {
        pred: Var,
        target: Tensor2,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// Gradients keyed by parameter slot.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_slot: BTreeMap<usize, Tensor2>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> Option<&Tensor2> {
        self.by_slot.get(&slot)
    }

    pub fn take(&mut self, slot: usize) -> Option<Tensor2> {
        self.by_slot.remove(&slot)
    }

    pub fn len(&self) -> usize {
        self.by_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_slot.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor2)> {
        self.by_slot.iter().map(|(&k, v)| (k, v))
    }
}

/// Draws an inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1/(1-rate)`.
pub(crate) fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Tensor2 {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    Tensor2::from_vec(rows, cols, data).expect("mask size")
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Records a forward pass for later [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: BTreeMap<usize, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.param_vars.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant (no gradient) input.
    pub fn input(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Input, false)
    }

    /// A trainable parameter identified by `slot`. Registering the same slot
    /// twice returns the existing handle so gradients accumulate in one place.
    pub fn param(&mut self, slot: usize, value: &Tensor2) -> Var {
        if let Some(&v) = self.param_vars.get(&slot) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param, true);
        self.param_vars.insert(slot, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `adj · x` for a constant, shared left factor (graph propagation).
    pub fn propagate(&mut self, adj: &Arc<Tensor2>, x: Var) -> Result<Var> {
        let value = adj.matmul(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Propagate(Arc::clone(adj), x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Broadcast-adds a 1×cols row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(row))?;
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(value, Op::AddRow(x, row), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).relu();
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (value, xhat, inv_std) =
            layer_norm_parts(self.value(x), self.value(gain), self.value(bias))?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout. Evaluation mode and `rate == 0` return `x` untouched
    /// and draw nothing from `rng`.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        check_dropout_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let (r, c) = self.value(x).shape();
        let mask = dropout_mask(r, c, rate, rng);
        let value = self.value(x).hadamard(&mask)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let value = self.value(x).softmax_rows();
        let rg = self.rg(x);
        self.push(value, Op::SoftmaxRows(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::param("concat of zero tensors"))?;
        let mut cols = 0;
        for &p in parts {
            let shape = self.value(p).shape();
            if shape.0 != rows {
                return Err(Error::shape("concat_cols", (rows, cols), shape));
            }
            cols += shape.1;
        }
        let mut out = Tensor2::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + t.cols()].copy_from_slice(t.row(r));
            }
            offset += t.cols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_col(&mut self, x: Var, col: usize) -> Result<Var> {
        let t = self.value(x);
        if col >= t.cols() {
            return Err(Error::Index(format!("column {col} of {}", t.cols())));
        }
        let value = Tensor2::from_vec(t.rows(), 1, t.column(col))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceCol(x, col), rg))
    }

    /// Scales row `i` of `x` by `s[i]`, where `s` is N×1.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xt, st) = (self.value(x), self.value(s));
        if st.shape() != (xt.rows(), 1) {
            return Err(Error::shape("scale_rows", xt.shape(), st.shape()));
        }
        let mut value = xt.clone();
        for r in 0..value.rows() {
            let f = st.get(r, 0);
            value.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(value, Op::ScaleRows(x, s), rg))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let value = self.value(x).gather_rows(idx)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::GatherRows(x, idx.to_vec()), rg))
    }

    /// Mean softmax cross-entropy; softmax and log are fused in backward.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = cross_entropy_parts(self.value(logits), labels)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor2::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Mean over all entries of `(pred - target)^2`.
    pub fn mse(&mut self, pred: Var, target: &Tensor2) -> Result<Var> {
        let diff = self.value(pred).sub(target)?;
        let loss = diff.frobenius_sq() / diff.len().max(1) as f64;
        let rg = self.rg(pred);
        Ok(self.push(
            Tensor2::scalar(loss),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor2::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Sign pattern of every recorded relu output, in recording order.
    ///
    /// Finite-difference checks use this to discard probes that cross a kink.
    pub fn relu_signature(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Relu(_)))
            .flat_map(|n| n.value.data().iter().map(|&v| v > 0.0))
            .collect()
    }

    /// Propagates from the scalar `loss` back to every registered parameter,
    /// then clears the tape. Parameters the loss does not depend on receive
    /// zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::State(
                "backward called without a recorded forward pass".into(),
            ));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Op::Param = self.nodes[idx].op {
                grads[idx] = Some(g);
                continue;
            }
            self.backprop_node(idx, &g, &mut grads)?;
        }

        let mut out = Gradients::default();
        for (&slot, &var) in &self.param_vars {
            let g = if var.0 <= loss.0 {
                grads[var.0].take()
            } else {
                None
            };
            let (r, c) = self.nodes[var.0].value.shape();
            out.by_slot
                .insert(slot, g.unwrap_or_else(|| Tensor2::zeros(r, c)));
        }
        self.clear();
        Ok(out)
    }

    fn backprop_node(&self, idx: usize, g: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, delta: Tensor2| -> Result<()> {
            if !self.nodes[v.0].requires_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul(&self.value(*b).transpose())?)?;
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).transpose().matmul(g)?)?;
                }
            }
            Op::Propagate(adj, x) => acc(*x, adj.t_matmul(g)?)?,
            Op::Add(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::AddRow(x, row) => {
                acc(*x, g.clone())?;
                if self.rg(*row) {
                    acc(*row, column_sums(g))?;
                }
            }
            Op::Relu(x) => {
                let mut d = g.clone();
                for (dv, &y) in d.data_mut().iter_mut().zip(node.value.data()) {
                    if y <= 0.0 {
                        *dv = 0.0;
                    }
                }
                acc(*x, d)?;
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                if self.rg(*bias) {
                    acc(*bias, column_sums(g))?;
                }
                if self.rg(*gain) {
                    acc(*gain, column_sums(&g.hadamard(xhat)?))?;
                }
                if self.rg(*x) {
                    let gain_v = self.value(*gain);
                    let cols = g.cols();
                    let n = cols as f64;
                    let mut dx = Tensor2::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let xr = xhat.row(r);
                        let dxhat: Vec<f64> =
                            gr.iter().zip(gain_v.data()).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n;
                        let out = dx.row_mut(r);
                        for c in 0..cols {
                            out[c] = inv_std[r] * (dxhat[c] - mean_d - xr[c] * mean_dx);
                        }
                    }
                    acc(*x, dx)?;
                }
            }
            Op::Dropout { x, mask } => acc(*x, g.hadamard(mask)?)?,
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut d = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, &gv), &yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*x, d)?;
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.value(p).shape();
                    let mut d = Tensor2::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r)
                            .copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    acc(p, d)?;
                }
            }
            Op::SliceCol(x, col) => {
                let (rows, cols) = self.value(*x).shape();
                let mut d = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    d.set(r, *col, g.get(r, 0));
                }
                acc(*x, d)?;
            }
            Op::ScaleRows(x, s) => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                if self.rg(*x) {
                    let mut d = g.clone();
                    for r in 0..d.rows() {
                        let f = sv.get(r, 0);
                        d.row_mut(r).iter_mut().for_each(|v| *v *= f);
                    }
                    acc(*x, d)?;
                }
                if self.rg(*s) {
                    let mut d = Tensor2::zeros(sv.rows(), 1);
                    for r in 0..sv.rows() {
                        d.set(
                            r,
                            0,
                            g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum(),
                        );
                    }
                    acc(*s, d)?;
                }
            }
            Op::GatherRows(x, idx) => {
                let (rows, cols) = self.value(*x).shape();
                let mut d = Tensor2::zeros(rows, cols);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                acc(*x, d)?;
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let scale = g.item() / labels.len() as f64;
                let mut d = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    let row = d.row_mut(r);
                    row[y] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                acc(*logits, d)?;
            }
            Op::Mse { pred, target } => {
                let n = target.len().max(1) as f64;
                let f = 2.0 * g.item() / n;
                acc(*pred, self.value(*pred).sub(target)?.scale(f))?;
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                acc(*x, Tensor2::filled(r, c, g.item()))?;
            }
        }
        Ok(())
    }
}

fn column_sums(g: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}
