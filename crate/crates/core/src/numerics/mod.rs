//! Dense matrix arithmetic, the gradient tape, optimizers and the DCT.

mod dct;
mod optim;
mod tape;
mod tensor;

pub use dct::{dct_1d, idct_1d};
pub use optim::{OptimizerKind, OptimizerState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{cross_entropy, Tensor2};

use crate::error::Result;
use crate::rng::Rng;

/// Glorot/Xavier uniform initialisation: `U(-a, a)` with
/// `a = sqrt(6 / (rows + cols))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Tensor2 {
    use rand::Rng as _;
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor2::from_vec(rows, cols, data).expect("glorot size")
}

/// Inverted dropout on a plain tensor. Identity in evaluation mode.
pub fn dropout(x: &Tensor2, rate: f64, training: bool, rng: &mut Rng) -> Result<Tensor2> {
    tape::check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    x.hadamard(&tape::dropout_mask(x.rows(), x.cols(), rate, rng))
}

#[cfg(test)]
mod tests;
