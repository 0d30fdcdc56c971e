//! Client-level differential privacy: global-norm clipping, Gaussian
//! perturbation, Rényi-DP accounting of the Poisson-subsampled Gaussian
//! mechanism, conversion to (ε, δ), and noise-multiplier calibration.

mod accountant;

pub use accountant::{
    calibrate_sigma, compose_and_convert, rdp_subsampled_gaussian, AccountantState,
    DEFAULT_MAX_ORDER, SIGMA_BRACKET,
};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Privacy parameters of a training run.
///
/// `epsilon == None` is the non-private path: σ is zero, the accountant is
/// bypassed, and `clip` is usually infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacySpec {
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub sigma: f64,
    pub clip: f64,
    pub sample_rate: f64,
    pub steps: u64,
}

impl PrivacySpec {
    pub fn non_private() -> Self {
        Self {
            epsilon: None,
            delta: 1e-3,
            sigma: 0.0,
            clip: f64::INFINITY,
            sample_rate: 0.01,
            steps: 0,
        }
    }

    pub fn is_private(&self) -> bool {
        self.sigma > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta {} outside (0, 1)", self.delta)));
        }
        if !(self.clip > 0.0) {
            return Err(Error::param(format!(
                "clip norm {} must be positive",
                self.clip
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::param(format!(
                "sampling rate {} outside (0, 1]",
                self.sample_rate
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::param(format!(
                "noise multiplier {} must be finite and >= 0",
                self.sigma
            )));
        }
        if self.epsilon.is_none() != (self.sigma == 0.0) {
            return Err(Error::param(
                "sigma must be zero exactly when epsilon is unbounded",
            ));
        }
        Ok(())
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `grad` by `1 / max(1, ‖grad‖₂ / clip)`. An infinite `clip` is the
/// identity.
pub fn clip_global(grad: &[f64], clip: f64) -> Vec<f64> {
    let mut out = grad.to_vec();
    clip_global_in_place(&mut out, clip);
    out
}

/// In-place form of [`clip_global`]; returns the pre-clip norm.
pub fn clip_global_in_place(grad: &mut [f64], clip: f64) -> f64 {
    let norm = l2_norm(grad);
    if norm > clip {
        let factor = clip / norm;
        grad.iter_mut().for_each(|g| *g *= factor);
    }
    norm
}

/// Adds independent `N(0, σ²C²)` noise to every coordinate. σ = 0 is the
/// identity and consumes no randomness.
pub fn add_gaussian(grad: &[f64], sigma: f64, clip: f64, rng: &mut Rng) -> Vec<f64> {
    let mut out = grad.to_vec();
    add_gaussian_in_place(&mut out, sigma, clip, rng);
    out
}

pub fn add_gaussian_in_place(grad: &mut [f64], sigma: f64, clip: f64, rng: &mut Rng) {
    if sigma == 0.0 {
        return;
    }
    let std = sigma * clip;
    for g in grad.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *g += std * z;
    }
}
