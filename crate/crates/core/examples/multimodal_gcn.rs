//! Forward pass of the two-modality GCN: class scores, fused embedding and
//! per-node attention over modalities, plus a finite-difference check.

use std::sync::Arc;

use fedgraph::graph::build_graph;
use fedgraph::models::{forward, gradient_check, init_params, ModelInput, ModelKind, ModelSpec};
use fedgraph::rng::seeded;
use fedgraph::{Result, Tensor2};
use rand_distr::{Distribution, StandardNormal};

fn random(rows: usize, cols: usize, seed: u64) -> Result<Tensor2> {
    let mut rng = seeded(seed);
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    )
}

fn main() -> Result<()> {
    let n = 10;
    let features = vec![random(n, 6, 1)?, random(n, 4, 2)?];
    let adjacency = features
        .iter()
        .map(|f| build_graph(f, &[0..n / 2, n / 2..n], 20.0, None).map(|g| Arc::new(g.adjacency)))
        .collect::<Result<Vec<_>>>()?;
    let input = ModelInput {
        features,
        adjacency,
    };

    let spec = ModelSpec {
        kind: ModelKind::Gcn,
        input_dims: vec![6, 4],
        hidden: 8,
        classes: 3,
        layers: 2,
        dropout: 0.0,
    };
    let params = init_params(&spec, 11)?;
    for (name, shape) in spec.layout() {
        println!("{name:<16} {shape:?}");
    }

    let out = forward(&spec, &params, &input, false, &mut seeded(0))?;
    println!(
        "logits {:?}, embedding {:?}",
        out.logits.shape(),
        out.embedding.shape()
    );
    println!(
        "attention of node 0 over modalities: {:?}",
        out.attention.row(0)
    );

    let nodes: Vec<usize> = (0..n).collect();
    let labels: Vec<usize> = nodes.iter().map(|i| i % 3).collect();
    let check = gradient_check(&spec, &params, &input, &nodes, &labels, 1e-5)?;
    println!(
        "gradient check: {} coordinates, max relative error {:.2e}",
        check.checked, check.max_relative_error
    );
    Ok(())
}
