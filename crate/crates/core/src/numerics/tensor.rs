use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor2({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows.min(6) {
            write!(f, "{:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        if self.rows > 6 {
            write!(f, "...")?;
        }
        write!(f, "]")
    }
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::param(format!(
                "buffer of length {} cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::param(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                // exact zeros contribute nothing; skipping keeps sparse adjacencies cheap
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor2 {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(Error::shape("t_matmul", self.shape(), other.shape()));
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let b_row = &other.data[p * m..(p + 1) * m];
            for i in 0..n {
                let a = self.data[p * n + i];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out[i * m..(i + 1) * m].iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor2 {
            rows: n,
            cols: m,
            data: out,
        })
    }

    fn zip_with(
        &self,
        other: &Tensor2,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor2> {
        if self.shape() != other.shape() {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape("add_assign", self.shape(), other.shape()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds a 1×cols row vector to every row.
    pub fn add_row(&self, row: &Tensor2) -> Result<Tensor2> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::shape("add_row", self.shape(), row.shape()));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor2) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn relu(&self) -> Tensor2 {
        self.map(|v| v.max(0.0))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Tensor2 {
        let mut out = self.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        out
    }

    /// Row-wise layer normalization followed by per-column gain and bias.
    pub fn layer_norm_rows(&self, gain: &Tensor2, bias: &Tensor2) -> Result<Tensor2> {
        Ok(layer_norm_parts(self, gain, bias)?.0)
    }

    /// Selects rows by index, in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor2> {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return Err(Error::Index(format!("row {i} of {} rows", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor2 {
            rows: idx.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer norm forward returning `(output, normalized rows, 1/std per row)`.
pub(crate) fn layer_norm_parts(
    x: &Tensor2,
    gain: &Tensor2,
    bias: &Tensor2,
) -> Result<(Tensor2, Tensor2, Vec<f64>)> {
    if gain.shape() != (1, x.cols) {
        return Err(Error::shape("layer_norm gain", x.shape(), gain.shape()));
    }
    if bias.shape() != (1, x.cols) {
        return Err(Error::shape("layer_norm bias", x.shape(), bias.shape()));
    }
    let n = x.cols as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = xhat.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * istd;
        }
        inv_std.push(istd);
    }
    let mut out = xhat.clone();
    for r in 0..out.rows {
        for ((o, g), b) in out.row_mut(r).iter_mut().zip(&gain.data).zip(&bias.data) {
            *o = *o * g + b;
        }
    }
    Ok((out, xhat, inv_std))
}

/// Mean cross-entropy of row-wise softmax against integer labels, plus the
/// softmax probabilities.
pub(crate) fn cross_entropy_parts(logits: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    if labels.len() != logits.rows {
        return Err(Error::param(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows
        )));
    }
    if logits.rows == 0 {
        return Err(Error::param("cross entropy over zero rows"));
    }
    let mut probs = logits.clone();
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= logits.cols {
            return Err(Error::Index(format!(
                "label {label} with {} classes",
                logits.cols
            )));
        }
        let row = probs.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= row[label] - max - log_total;
        for v in row.iter_mut() {
            *v = (*v - max - log_total).exp();
        }
    }
    Ok((loss / logits.rows as f64, probs))
}

/// Mean cross-entropy loss of `logits` against `labels`.
pub fn cross_entropy(logits: &Tensor2, labels: &[usize]) -> Result<f64> {
    Ok(cross_entropy_parts(logits, labels)?.0)
}
