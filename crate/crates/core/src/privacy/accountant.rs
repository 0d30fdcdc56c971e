use crate::error::{Error, Result};

/// Largest integer Rényi order tracked by default (orders are 2..=256).
pub const DEFAULT_MAX_ORDER: u32 = 256;

/// Bisection bracket for [`calibrate_sigma`].
pub const SIGMA_BRACKET: (f64, f64) = (0.3, 100.0);

const SIGMA_TOLERANCE: f64 = 1e-4;

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Per-step RDP γ(α) of the Poisson-subsampled Gaussian mechanism with
/// sampling rate `q` and noise multiplier `sigma`, for integer `order ≥ 2`.
///
/// `q == 1` uses the closed form α/(2σ²). Otherwise the binomial expansion
/// `1/(α−1) · log Σ_j C(α,j) (1−q)^(α−j) q^j exp(j(j−1)/(2σ²))` is summed in
/// log space.
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, order: u32) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Accounting(format!(
            "noise multiplier {sigma} gives unbounded privacy loss"
        )));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Accounting(format!(
            "sampling rate {q} outside (0, 1]"
        )));
    }
    if order < 2 {
        return Err(Error::Accounting(format!(
            "order {order} must be an integer >= 2"
        )));
    }
    let alpha = order as f64;
    if q == 1.0 {
        return Ok(alpha / (2.0 * sigma * sigma));
    }
    let (log_q, log_1mq) = (q.ln(), (-q).ln_1p());
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut log_binom = 0.0f64;
    let mut total = f64::NEG_INFINITY;
    for j in 0..=order {
        if j > 0 {
            log_binom += ((order - j + 1) as f64).ln() - (j as f64).ln();
        }
        let jf = j as f64;
        let term = log_binom + (alpha - jf) * log_1mq + jf * log_q + jf * (jf - 1.0) * inv_two_var;
        total = log_add_exp(total, term);
    }
    // total >= 0 analytically; clamp rounding noise at tiny q
    Ok((total / (alpha - 1.0)).max(0.0))
}

/// Accumulated RDP curve over a grid of integer orders.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountantState {
    orders: Vec<u32>,
    rdp: Vec<f64>,
    steps: u64,
}

impl Default for AccountantState {
    fn default() -> Self {
        Self::new((2..=DEFAULT_MAX_ORDER).collect())
    }
}

impl AccountantState {
    pub fn new(orders: Vec<u32>) -> Self {
        let rdp = vec![0.0; orders.len()];
        Self {
            orders,
            rdp,
            steps: 0,
        }
    }

    /// Per-step curve for one mechanism, with `steps == 1`.
    pub fn for_mechanism(q: f64, sigma: f64) -> Result<Self> {
        let mut s = Self::default();
        s.compose(q, sigma, 1)?;
        Ok(s)
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn rdp(&self) -> &[f64] {
        &self.rdp
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Adds `steps` applications of the subsampled Gaussian mechanism.
    pub fn compose(&mut self, q: f64, sigma: f64, steps: u64) -> Result<()> {
        for (g, &a) in self.rdp.iter_mut().zip(&self.orders) {
            *g += steps as f64 * rdp_subsampled_gaussian(q, sigma, a)?;
        }
        self.steps += steps;
        Ok(())
    }

    /// Converts the accumulated curve to (ε, best order) at `delta`.
    pub fn epsilon(&self, delta: f64) -> Result<(f64, u32)> {
        best_epsilon(&self.orders, &self.rdp, 1, delta)
    }
}

fn best_epsilon(orders: &[u32], rdp: &[f64], times: u64, delta: f64) -> Result<(f64, u32)> {
    if orders.is_empty() {
        return Err(Error::param("empty Rényi order grid"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta {delta} outside (0, 1)")));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let mut best = (f64::INFINITY, orders[0]);
    for (&a, &g) in orders.iter().zip(rdp) {
        let eps = times as f64 * g + log_inv_delta / (a as f64 - 1.0);
        if eps < best.0 {
            best = (eps, a);
        }
    }
    Ok(best)
}

/// ε after composing the curve held in `state` `steps` times:
/// `min_α [T·γ(α) + log(1/δ)/(α−1)]`.
pub fn compose_and_convert(state: &AccountantState, steps: u64, delta: f64) -> Result<f64> {
    if steps == 0 {
        return Err(Error::param("composition length must be at least 1"));
    }
    Ok(best_epsilon(&state.orders, &state.rdp, steps, delta)?.0)
}

fn epsilon_for(sigma: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    compose_and_convert(&AccountantState::for_mechanism(q, sigma)?, steps, delta)
}

/// Smallest σ in [`SIGMA_BRACKET`] (to within 1e-4) whose ε after `steps`
/// compositions at sampling rate `q` does not exceed `epsilon`.
pub fn calibrate_sigma(epsilon: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Calibration(format!(
            "target epsilon {epsilon} must be finite and positive"
        )));
    }
    let (mut lo, mut hi) = SIGMA_BRACKET;
    if epsilon_for(hi, delta, q, steps)? > epsilon {
        return Err(Error::Calibration(format!(
            "epsilon {epsilon} unattainable with sigma <= {hi} over {steps} steps at q = {q}"
        )));
    }
    if epsilon_for(lo, delta, q, steps)? <= epsilon {
        return Ok(lo);
    }
    while hi - lo > SIGMA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if epsilon_for(mid, delta, q, steps)? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
