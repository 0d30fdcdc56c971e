//! Per-client window graphs: temporal chain edges plus distance-threshold
//! edges, and the symmetric normalisation `D̃^{-1/2}(A + I)D̃^{-1/2}`.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::dataio::{Modality, WindowSet};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Default percentile of pairwise distances used as the edge threshold.
pub const DEFAULT_PERCENTILE: f64 = 10.0;

/// Undirected graph over the windows of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityGraph {
    /// `None` for a graph shared by every modality.
    pub modality: Option<Modality>,
    /// Pairs `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Distance threshold the edges were built with.
    pub threshold: f64,
    /// Normalised adjacency, N×N.
    pub adjacency: Tensor2,
}

impl ModalityGraph {
    pub fn node_count(&self) -> usize {
        self.adjacency.rows()
    }

    /// Graph with self-loops only; its normalised adjacency is the identity.
    pub fn isolated(n: usize) -> Self {
        Self {
            modality: None,
            edges: Vec::new(),
            threshold: 0.0,
            adjacency: Tensor2::identity(n),
        }
    }

    /// Writes `i,j,distance` for every edge, distances taken from `features`.
    pub fn write_edge_csv(&self, features: &Tensor2, path: &Path) -> Result<()> {
        let mut out = String::from("i,j,distance\n");
        for &(i, j) in &self.edges {
            writeln!(
                out,
                "{i},{j},{:.16e}",
                euclidean(features.row(i), features.row(j))
            )
            .expect("string write");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::param(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// `D̃^{-1/2} Ã D̃^{-1/2}` with `D̃` the row sums of `Ã`.
pub fn normalize_adjacency(a_tilde: &Tensor2) -> Result<Tensor2> {
    let n = a_tilde.rows();
    if a_tilde.cols() != n {
        return Err(Error::shape("normalize_adjacency", a_tilde.shape(), (n, n)));
    }
    for i in 0..n {
        for j in 0..i {
            if a_tilde.get(i, j) != a_tilde.get(j, i) {
                return Err(Error::param(format!(
                    "adjacency not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a_tilde.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = a_tilde.clone();
    for i in 0..n {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// `Â · H`.
pub fn propagate(a_hat: &Tensor2, h: &Tensor2) -> Result<Tensor2> {
    a_hat.matmul(h)
}

/// Builds the graph over all rows of `features`.
///
/// `runs` are ranges of consecutive windows from one recording; each
/// adjacent pair in a run is linked. The distance threshold is the
/// `percentile` of pairwise distances among the `reference` rows (all rows
/// when `None`), and every pair of rows within it is linked.
pub fn build_graph(
    features: &Tensor2,
    runs: &[Range<usize>],
    percentile_p: f64,
    reference: Option<&[usize]>,
) -> Result<ModalityGraph> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::param("graph needs at least one node"));
    }
    if !(percentile_p > 0.0 && percentile_p < 100.0) {
        return Err(Error::param(format!(
            "threshold percentile {percentile_p} outside (0, 100)"
        )));
    }
    let all: Vec<usize>;
    let reference = match reference {
        Some(r) => r,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    let mut ref_dist = Vec::with_capacity(reference.len() * reference.len().saturating_sub(1) / 2);
    for (a, &i) in reference.iter().enumerate() {
        for &j in &reference[a + 1..] {
            ref_dist.push(euclidean(features.row(i), features.row(j)));
        }
    }
    let threshold = if ref_dist.is_empty() {
        0.0
    } else {
        percentile(&ref_dist, percentile_p)?
    };

    let mut adj = Tensor2::identity(n);
    for run in runs {
        if run.end > n {
            return Err(Error::Index(format!(
                "recording run {run:?} exceeds {n} nodes"
            )));
        }
        for i in run.start..run.end.saturating_sub(1) {
            adj.set(i, i + 1, 1.0);
            adj.set(i + 1, i, 1.0);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if euclidean(features.row(i), features.row(j)) <= threshold {
                adj.set(i, j, 1.0);
                adj.set(j, i, 1.0);
            }
        }
    }
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| adj.get(i, j) != 0.0)
        .collect();
    Ok(ModalityGraph {
        modality: None,
        edges,
        threshold,
        adjacency: normalize_adjacency(&adj)?,
    })
}

/// Graphs for a client's windows: one per modality, or a single graph on
/// the concatenated features when `shared`. Thresholds come from the
/// `reference` (training) windows.
pub fn build_window_graphs(
    ws: &WindowSet,
    reference: &[usize],
    percentile_p: f64,
    shared: bool,
) -> Result<Vec<ModalityGraph>> {
    let runs = ws.recording_runs();
    if shared {
        let n = ws.len();
        let width: usize = ws.features.iter().map(Tensor2::cols).sum();
        let mut joined = Tensor2::zeros(n, width);
        for i in 0..n {
            let row = joined.row_mut(i);
            let mut offset = 0;
            for f in &ws.features {
                row[offset..offset + f.cols()].copy_from_slice(f.row(i));
                offset += f.cols();
            }
        }
        return Ok(vec![build_graph(
            &joined,
            &runs,
            percentile_p,
            Some(reference),
        )?]);
    }
    ws.modalities
        .iter()
        .zip(&ws.features)
        .map(|(&m, f)| {
            let mut g = build_graph(f, &runs, percentile_p, Some(reference))?;
            g.modality = Some(m);
            Ok(g)
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests;
