use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::federated::{fedavg_flat, sample_subset};
use crate::privacy::{add_gaussian_in_place, clip_global_in_place, l2_norm};
use crate::rng::{rng_from, Rng};

/// Constants of the convergence bound, plus the testbed's step size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBoundParams {
    /// Strong convexity.
    pub mu: f64,
    /// Smoothness.
    pub smoothness: f64,
    /// Gradient-norm bound.
    pub grad_bound: f64,
    /// Spread of client optima.
    pub zeta: f64,
    /// Per-sample gradient noise.
    pub sigma_g: f64,
    pub dim: usize,
    /// Clients sampled per round.
    pub sampled: usize,
    pub batch: usize,
    pub clip: f64,
    pub sigma: f64,
    pub eta: f64,
}

impl Default for ConvergenceBoundParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            smoothness: 1.0,
            grad_bound: 1.0,
            zeta: 0.0,
            sigma_g: 0.0,
            dim: 2,
            sampled: 1,
            batch: 1,
            clip: 1.0,
            sigma: 0.0,
            eta: 0.1,
        }
    }
}

impl ConvergenceBoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= self.smoothness) {
            return Err(Error::param("need 0 < mu <= smoothness"));
        }
        if self.sampled == 0 || self.batch == 0 || self.dim == 0 {
            return Err(Error::param(
                "sampled clients, batch and dimension must be positive",
            ));
        }
        if [self.zeta, self.sigma_g, self.sigma]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::param("variances must be non-negative"));
        }
        if !(self.clip > 0.0) || !(self.eta > 0.0) {
            return Err(Error::param("clip and step size must be positive"));
        }
        Ok(())
    }
}

/// `(4/μ²)(σ_g²/(mB) + ζ²/m + dσ²C²/m)`.
pub fn theoretical_floor(p: &ConvergenceBoundParams) -> f64 {
    let m = p.sampled as f64;
    let noise = p.dim as f64 * p.sigma * p.sigma * p.clip * p.clip / m;
    4.0 / (p.mu * p.mu)
        * (p.sigma_g * p.sigma_g / (m * p.batch as f64) + p.zeta * p.zeta / m + noise)
}

/// Squared distance to the optimum per round (index 0 is the start) across
/// replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mean: Vec<f64>,
    pub p10: Vec<f64>,
    pub p90: Vec<f64>,
    pub floor: f64,
}

impl Trajectory {
    /// Mean of `mean` over rounds `from..`.
    pub fn plateau(&self, from: usize) -> f64 {
        let tail = &self.mean[from.min(self.mean.len())..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    /// CSV `round,mean_sq_dist,floor_theoretical,p10_sq_dist,p90_sq_dist`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("round,mean_sq_dist,floor_theoretical,p10_sq_dist,p90_sq_dist\n");
        for (r, ((m, lo), hi)) in self.mean.iter().zip(&self.p10).zip(&self.p90).enumerate() {
            writeln!(out, "{r},{m:.16e},{:.16e},{lo:.16e},{hi:.16e}", self.floor)
                .expect("string write");
        }
        out
    }
}

fn gaussian(d: usize, rng: &mut Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn replicate(
    p: &ConvergenceBoundParams,
    clients: usize,
    rounds: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let d = p.dim;
    let optima: Vec<Vec<f64>> = (0..clients)
        .map(|_| gaussian(d, rng).iter().map(|z| p.zeta * z).collect())
        .collect();
    let w_star: Vec<f64> = (0..d)
        .map(|k| optima.iter().map(|c| c[k]).sum::<f64>() / clients as f64)
        .collect();
    let dir = gaussian(d, rng);
    let norm = l2_norm(&dir);
    let mut w: Vec<f64> = w_star.iter().zip(&dir).map(|(s, u)| s + u / norm).collect();
    let dist = |w: &[f64]| {
        w.iter()
            .zip(&w_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let mut out = vec![dist(&w)];
    let grad_noise = p.sigma_g / (p.batch as f64).sqrt();
    for _ in 0..rounds {
        let sampled = sample_subset(clients, p.sampled, rng);
        let mut deltas = Vec::with_capacity(sampled.len());
        for &c in &sampled {
            let mut g: Vec<f64> = w
                .iter()
                .zip(&optima[c])
                .map(|(wi, ci)| {
                    let z: f64 = StandardNormal.sample(rng);
                    p.mu * (wi - ci) + grad_noise * z
                })
                .collect();
            clip_global_in_place(&mut g, p.clip);
            let mut delta: Vec<f64> = g.iter().map(|v| -p.eta * v).collect();
            add_gaussian_in_place(&mut delta, p.sigma, p.eta * p.clip, rng);
            deltas.push(delta);
        }
        let refs: Vec<&[f64]> = deltas.iter().map(Vec::as_slice).collect();
        w = fedavg_flat(&w, &refs, None)?;
        out.push(dist(&w));
    }
    Ok(out)
}

/// Federated DP gradient descent on `F_c(w) = ½μ‖w − c_c‖²` over `clients`
/// clients whose optima spread with scale ζ. Each round `p.sampled` clients
/// take one clipped gradient step and perturb it as in local training.
/// Returns `‖w − w*‖²` statistics over `replicates` seeds.
pub fn quadratic_testbed(
    p: &ConvergenceBoundParams,
    clients: usize,
    rounds: usize,
    replicates: usize,
    seed: u64,
) -> Result<Trajectory> {
    p.validate()?;
    if clients < p.sampled {
        return Err(Error::param(format!(
            "{} sampled clients exceed {clients} clients",
            p.sampled
        )));
    }
    if replicates == 0 {
        return Err(Error::param("at least one replicate required"));
    }
    let runs = (0..replicates)
        .map(|r| replicate(p, clients, rounds, &mut rng_from(seed, &[0x7e57, r as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut traj = Trajectory {
        mean: Vec::with_capacity(rounds + 1),
        p10: Vec::with_capacity(rounds + 1),
        p90: Vec::with_capacity(rounds + 1),
        floor: theoretical_floor(p),
    };
    for t in 0..=rounds {
        let mut col: Vec<f64> = runs.iter().map(|r| r[t]).collect();
        col.sort_by(f64::total_cmp);
        traj.mean.push(col.iter().sum::<f64>() / col.len() as f64);
        traj.p10.push(quantile(&col, 0.1));
        traj.p90.push(quantile(&col, 0.9));
    }
    Ok(traj)
}

/// Least-squares slope of `ln(mean − plateau)` against round, over the
/// leading rounds where `mean > factor · plateau` (and above 1e-250),
/// returned as a per-round ratio. `None` with fewer than three such rounds.
pub fn fit_geometric_ratio(mean: &[f64], plateau: f64, factor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = mean
        .iter()
        .enumerate()
        .take_while(|(_, &v)| v > factor * plateau && v > 1e-250)
        .map(|(t, &v)| (t as f64, (v - plateau).ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
    });
    Some((num / den).exp())
}
