//! Orthonormal DCT-II and its inverse (DCT-III), by direct summation.
//!
//! Windows here are at most a few hundred samples, so the O(N·keep) cosine
//! sum is cheap and exact enough.

use std::f64::consts::PI;

use crate::error::{Error, Result};

fn scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// First `keep` orthonormal DCT-II coefficients of `signal`.
pub fn dct_1d(signal: &[f64], keep: usize) -> Result<Vec<f64>> {
    let n = signal.len();
    if n == 0 {
        return Err(Error::param("dct of an empty signal"));
    }
    if keep > n {
        return Err(Error::param(format!(
            "cannot keep {keep} coefficients of a length-{n} signal"
        )));
    }
    let step = PI / n as f64;
    Ok((0..keep)
        .map(|k| {
            let s: f64 = signal
                .iter()
                .enumerate()
                .map(|(i, &x)| x * (step * (i as f64 + 0.5) * k as f64).cos())
                .sum();
            scale(k, n) * s
        })
        .collect())
}

/// Inverse of [`dct_1d`] for a signal of length `n`; missing trailing
/// coefficients are treated as zero.
pub fn idct_1d(coeffs: &[f64], n: usize) -> Result<Vec<f64>> {
    if n == 0 || coeffs.len() > n {
        return Err(Error::param(format!(
            "{} coefficients for length {n}",
            coeffs.len()
        )));
    }
    let step = PI / n as f64;
    Ok((0..n)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| scale(k, n) * c * (step * (i as f64 + 0.5) * k as f64).cos())
                .sum()
        })
        .collect())
}
