use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::Prediction;

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::param(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::param("metrics need at least one labelled node"));
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / pred.len() as f64)
}

/// How per-class F1 scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F1Average {
    /// Unweighted mean over classes.
    Macro,
    /// Global counts; equals accuracy for single-label data.
    Micro,
    /// Mean weighted by class support.
    Weighted,
}

impl F1Average {
    pub fn name(self) -> &'static str {
        match self {
            F1Average::Macro => "macro",
            F1Average::Micro => "micro",
            F1Average::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for F1Average {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "macro" => Ok(F1Average::Macro),
            "micro" => Ok(F1Average::Micro),
            "weighted" => Ok(F1Average::Weighted),
            other => Err(Error::param(format!("unknown F1 averaging `{other}`"))),
        }
    }
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, class)).sum()
    }

    /// Per-class F1; a zero precision or recall denominator gives 0.
    pub fn class_f1(&self, class: usize) -> f64 {
        let tp = self.get(class, class) as f64;
        let (pred, sup) = (self.predicted(class) as f64, self.support(class) as f64);
        if pred == 0.0 || sup == 0.0 {
            return 0.0;
        }
        let (p, r) = (tp / pred, tp / sup);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn f1(&self, average: F1Average) -> f64 {
        let k = self.classes;
        match average {
            F1Average::Macro => {
                let absent = (0..k)
                    .filter(|&c| self.support(c) == 0 && self.predicted(c) == 0)
                    .count();
                if absent > 0 {
                    log::warn!(
                        "{absent} class(es) absent from predictions and labels count as F1 = 0"
                    );
                }
                (0..k).map(|c| self.class_f1(c)).sum::<f64>() / k as f64
            }
            F1Average::Micro => self.trace() as f64 / self.total().max(1) as f64,
            F1Average::Weighted => {
                let total = self.total().max(1) as f64;
                (0..k)
                    .map(|c| self.class_f1(c) * self.support(c) as f64 / total)
                    .sum()
            }
        }
    }

    /// CSV with a `true\pred` header row and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_class");
        for p in 0..self.classes {
            write!(out, ",pred_{p}").expect("string write");
        }
        out.push('\n');
        for t in 0..self.classes {
            write!(out, "{t}").expect("string write");
            for p in 0..self.classes {
                write!(out, ",{}", self.get(t, p)).expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::param(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::Index(format!(
                "label {} outside {classes} classes",
                p.max(t)
            )));
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

pub fn macro_f1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    f1_score(pred, truth, classes, F1Average::Macro)
}

pub fn f1_score(
    pred: &[usize],
    truth: &[usize],
    classes: usize,
    average: F1Average,
) -> Result<f64> {
    check_lengths(pred, truth)?;
    Ok(confusion(pred, truth, classes)?.f1(average))
}

/// `1 − acc_dp / acc_nodp`.
pub fn utility_loss(acc_dp: f64, acc_nodp: f64) -> Result<f64> {
    if !(acc_nodp > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "utility loss needs a positive non-private accuracy, got {acc_nodp}"
        )));
    }
    Ok(1.0 - acc_dp / acc_nodp)
}

/// Writes `node_id,label,h1..hH` rows of the fused embedding for the given
/// nodes.
pub fn export_embeddings(
    pred: &Prediction,
    nodes: &[usize],
    labels: &[usize],
    path: &Path,
) -> Result<()> {
    if nodes.len() != labels.len() {
        return Err(Error::param("one label per exported node required"));
    }
    let h = pred.embedding.cols();
    let mut out = String::from("node_id,label");
    for c in 1..=h {
        write!(out, ",h{c}").expect("string write");
    }
    out.push('\n');
    for (&n, &l) in nodes.iter().zip(labels) {
        if n >= pred.embedding.rows() {
            return Err(Error::Index(format!(
                "node {n} outside {} embeddings",
                pred.embedding.rows()
            )));
        }
        write!(out, "{n},{l}").expect("string write");
        for v in pred.embedding.row(n) {
            write!(out, ",{v:.16e}").expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
