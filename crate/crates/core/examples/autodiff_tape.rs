//! Fits a one-layer softmax classifier with the gradient tape and plain SGD.

use fedgraph::numerics::{OptimizerState, Tape};
use fedgraph::rng::seeded;
use fedgraph::{Result, Tensor2};
use rand::Rng as _;

fn main() -> Result<()> {
    let mut rng = seeded(7);
    // Two blobs in the plane, labelled by which side of x = y they fall on.
    let n = 64;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        rows.push([x, y]);
        labels.push(usize::from(x > y));
    }
    let x = Tensor2::from_rows(&rows)?;

    let mut params = vec![Tensor2::zeros(2, 2), Tensor2::zeros(1, 2)];
    let mut opt = OptimizerState::sgd(0.5);
    for step in 0..=200 {
        let mut tape = Tape::new();
        let input = tape.input(x.clone());
        let w = tape.param(0, &params[0]);
        let b = tape.param(1, &params[1]);
        let xw = tape.matmul(input, w)?;
        let logits = tape.add_row(xw, b)?;
        let loss = tape.cross_entropy(logits, &labels)?;
        if step % 50 == 0 {
            println!("step {step:>3}  loss {:.4}", tape.value(loss).item());
        }
        let mut grads = tape.backward(loss)?;
        let g = vec![grads.take(0).expect("w"), grads.take(1).expect("b")];
        opt.apply(&mut params, &g)?;
    }
    println!("weights {:?}", params[0].data());
    Ok(())
}
