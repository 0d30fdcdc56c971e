//! Multimodal GCN and its feedforward baseline.
//!
//! Per modality `m` and layer `l` the encoder computes
//! `Z = dropout(relu(layer_norm(Â·(H·W) + H·B)))` (the FFN drops `Â`), with
//! `H` the modality features for the first layer and the previous `Z` after.
//! Per-node attention scores `Z·a + b` are softmaxed across modalities, the
//! weighted sum of modality embeddings is the fused embedding, and a linear
//! layer produces logits.

mod params;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use params::{flatten_tensors, unflatten_like, ModelParams};

use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, Tape, Tensor2, Var};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gcn,
    Ffn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Ffn => "ffn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "ffn" => Ok(ModelKind::Ffn),
            other => Err(Error::param(format!(
                "unknown model `{other}` (expected gcn or ffn)"
            ))),
        }
    }
}

/// Architecture of a model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Feature width per modality.
    pub input_dims: Vec<usize>,
    pub hidden: usize,
    pub classes: usize,
    /// Encoder layers per modality.
    pub layers: usize,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dims.is_empty() || self.input_dims.contains(&0) {
            return Err(Error::param(
                "model needs at least one modality of positive width",
            ));
        }
        if self.hidden == 0 || self.classes == 0 || self.layers == 0 {
            return Err(Error::param(
                "hidden size, class count and layer count must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn modalities(&self) -> usize {
        self.input_dims.len()
    }

    fn per_modality(&self) -> usize {
        4 * self.layers + 2
    }

    fn layer_slot(&self, m: usize, l: usize) -> usize {
        m * self.per_modality() + 4 * l
    }

    fn attention_slot(&self, m: usize) -> usize {
        m * self.per_modality() + 4 * self.layers
    }

    fn classifier_slot(&self) -> usize {
        self.modalities() * self.per_modality()
    }

    /// Names and shapes of every parameter tensor, in slot order.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let h = self.hidden;
        let mut out = Vec::new();
        for (m, &d) in self.input_dims.iter().enumerate() {
            for l in 0..self.layers {
                let fan_in = if l == 0 { d } else { h };
                out.push((format!("m{m}.l{l}.w"), (fan_in, h)));
                out.push((format!("m{m}.l{l}.b_self"), (fan_in, h)));
                out.push((format!("m{m}.l{l}.ln_gain"), (1, h)));
                out.push((format!("m{m}.l{l}.ln_bias"), (1, h)));
            }
            out.push((format!("m{m}.att_a"), (h, 1)));
            out.push((format!("m{m}.att_b"), (1, 1)));
        }
        out.push(("cls.w".into(), (h, self.classes)));
        out.push(("cls.b".into(), (1, self.classes)));
        out
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        let layout = self.layout();
        if layout.len() != params.len() {
            return Err(Error::param(format!(
                "parameter count {} does not match architecture ({})",
                params.len(),
                layout.len()
            )));
        }
        for (slot, (_, shape)) in layout.iter().enumerate() {
            if params.tensor(slot).shape() != *shape {
                return Err(Error::shape(
                    "model parameter",
                    *shape,
                    params.tensor(slot).shape(),
                ));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, unit layer-norm gain.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let entries = spec
        .layout()
        .into_iter()
        .map(|(name, (r, c))| {
            let t = if name.ends_with("ln_gain") {
                Tensor2::filled(r, c, 1.0)
            } else if name.ends_with(".b") || name.ends_with("att_b") || name.ends_with("ln_bias") {
                Tensor2::zeros(r, c)
            } else {
                glorot_uniform(r, c, &mut rng)
            };
            (name, t)
        })
        .collect();
    Ok(ModelParams::new(entries))
}

/// Node features per modality plus, for the GCN, one normalised adjacency per
/// modality (or a single one shared by all).
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub features: Vec<Tensor2>,
    pub adjacency: Vec<Arc<Tensor2>>,
}

impl ModelInput {
    pub fn nodes(&self) -> usize {
        self.features.first().map_or(0, Tensor2::rows)
    }

    fn adjacency_for(&self, m: usize) -> Result<&Arc<Tensor2>> {
        match self.adjacency.len() {
            0 => Err(Error::param("graph model needs an adjacency matrix")),
            1 => Ok(&self.adjacency[0]),
            _ => self
                .adjacency
                .get(m)
                .ok_or_else(|| Error::param(format!("no adjacency for modality {m}"))),
        }
    }
}

/// Model outputs for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Tensor2,
    /// Fused embedding, N×hidden.
    pub embedding: Tensor2,
    /// Attention weight of each modality, N×M.
    pub attention: Tensor2,
}

struct Outputs {
    logits: Var,
    embedding: Var,
    attention: Var,
}

fn record_forward(
    tape: &mut Tape,
    kind: ModelKind,
    spec: &ModelSpec,
    params: &ModelParams,
    input: &ModelInput,
    training: bool,
    rng: &mut Rng,
) -> Result<Outputs> {
    spec.check_params(params)?;
    if input.features.len() != spec.modalities() {
        return Err(Error::param(format!(
            "expected {} modality feature matrices, got {}",
            spec.modalities(),
            input.features.len()
        )));
    }
    let n = input.nodes();
    let p = |tape: &mut Tape, slot: usize| tape.param(slot, params.tensor(slot));
    let mut embeddings = Vec::with_capacity(spec.modalities());
    let mut scores = Vec::with_capacity(spec.modalities());
    for (m, x) in input.features.iter().enumerate() {
        if x.rows() != n {
            return Err(Error::shape("modality node count", (n, 0), x.shape()));
        }
        let mut h = tape.input(x.clone());
        for l in 0..spec.layers {
            let s = spec.layer_slot(m, l);
            let (w, b_self, gain, bias) =
                (p(tape, s), p(tape, s + 1), p(tape, s + 2), p(tape, s + 3));
            let hw = tape.matmul(h, w)?;
            let prop = match kind {
                ModelKind::Gcn => tape.propagate(input.adjacency_for(m)?, hw)?,
                ModelKind::Ffn => hw,
            };
            let selfterm = tape.matmul(h, b_self)?;
            let pre = tape.add(prop, selfterm)?;
            let normed = tape.layer_norm(pre, gain, bias)?;
            let act = tape.relu(normed);
            h = tape.dropout(act, spec.dropout, training, rng)?;
        }
        let s = spec.attention_slot(m);
        let (a, b) = (p(tape, s), p(tape, s + 1));
        let za = tape.matmul(h, a)?;
        scores.push(tape.add_row(za, b)?);
        embeddings.push(h);
    }
    let all_scores = tape.concat_cols(&scores)?;
    let attention = tape.softmax_rows(all_scores);
    let mut fused = None;
    for (m, &z) in embeddings.iter().enumerate() {
        let w = tape.slice_col(attention, m)?;
        let term = tape.scale_rows(z, w)?;
        fused = Some(match fused {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let embedding = fused.expect("at least one modality");
    let c = spec.classifier_slot();
    let (cw, cb) = (p(tape, c), p(tape, c + 1));
    let raw = tape.matmul(embedding, cw)?;
    let logits = tape.add_row(raw, cb)?;
    Ok(Outputs {
        logits,
        embedding,
        attention,
    })
}

fn run(
    kind: ModelKind,
    spec: &ModelSpec,
    params: &ModelParams,
    input: &ModelInput,
    training: bool,
    rng: &mut Rng,
) -> Result<Prediction> {
    let mut tape = Tape::new();
    let out = record_forward(&mut tape, kind, spec, params, input, training, rng)?;
    Ok(Prediction {
        logits: tape.value(out.logits).clone(),
        embedding: tape.value(out.embedding).clone(),
        attention: tape.value(out.attention).clone(),
    })
}

/// Forward pass of the architecture named by `spec.kind`.
pub fn forward(
    spec: &ModelSpec,
    params: &ModelParams,
    input: &ModelInput,
    training: bool,
    rng: &mut Rng,
) -> Result<Prediction> {
    run(spec.kind, spec, params, input, training, rng)
}

/// Graph forward pass, whatever `spec.kind` says.
pub fn gcn_forward(
    spec: &ModelSpec,
    params: &ModelParams,
    input: &ModelInput,
    training: bool,
    rng: &mut Rng,
) -> Result<Prediction> {
    run(ModelKind::Gcn, spec, params, input, training, rng)
}

/// Feedforward pass; adjacency in `input` is ignored.
pub fn ffn_forward(
    spec: &ModelSpec,
    params: &ModelParams,
    input: &ModelInput,
    training: bool,
    rng: &mut Rng,
) -> Result<Prediction> {
    run(ModelKind::Ffn, spec, params, input, training, rng)
}

/// Mean cross-entropy over `nodes` (with their `labels`) and its gradient
/// for every parameter tensor, in slot order.
pub fn loss_and_gradients(
    spec: &ModelSpec,
    params: &ModelParams,
    input: &ModelInput,
    nodes: &[usize],
    labels: &[usize],
    training: bool,
    rng: &mut Rng,
) -> Result<(f64, Vec<Tensor2>)> {
    if nodes.len() != labels.len() || nodes.is_empty() {
        return Err(Error::param(
            "loss needs one label per selected node and at least one node",
        ));
    }
    let mut tape = Tape::new();
    let out = record_forward(&mut tape, spec.kind, spec, params, input, training, rng)?;
    let picked = tape.gather_rows(out.logits, nodes)?;
    let loss = tape.cross_entropy(picked, labels)?;
    let value = tape.value(loss).item();
    let mut grads = tape.backward(loss)?;
    let grads = (0..params.len())
        .map(|slot| grads.take(slot).expect("every slot registered"))
        .collect();
    Ok((value, grads))
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the probe moved a relu across its kink.
    pub skipped: usize,
}

/// Compares analytic cross-entropy gradients with central differences
/// (step `h`) on every parameter coordinate, dropout disabled. The relative
/// error is `|n − a| / max(|n|, |a|, 1e-6)`.
pub fn gradient_check(
    spec: &ModelSpec,
    params: &ModelParams,
    input: &ModelInput,
    nodes: &[usize],
    labels: &[usize],
    h: f64,
) -> Result<GradientCheck> {
    let mut rng = seeded(0);
    let eval = |p: &ModelParams| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let out = record_forward(&mut tape, spec.kind, spec, p, input, false, &mut seeded(0))?;
        let picked = tape.gather_rows(out.logits, nodes)?;
        let loss = tape.cross_entropy(picked, labels)?;
        Ok((tape.value(loss).item(), tape.relu_signature()))
    };
    let (_, base_sig) = eval(params)?;
    let (_, grads) = loss_and_gradients(spec, params, input, nodes, labels, false, &mut rng)?;
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let flat = params.flatten();
    let mut report = GradientCheck {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut probe = params.clone();
    for (k, &a) in analytic.iter().enumerate() {
        let mut v = flat.clone();
        v[k] = flat[k] + h;
        probe.assign_flat(&v)?;
        let (fp, sp) = eval(&probe)?;
        v[k] = flat[k] - h;
        probe.assign_flat(&v)?;
        let (fm, sm) = eval(&probe)?;
        if sp != base_sig || sm != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let rel = (numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-6);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict_labels(logits: &Tensor2) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests;
