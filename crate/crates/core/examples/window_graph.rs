//! Builds a window graph from temporal and feature-distance edges and writes
//! its edge list.

use fedgraph::graph::{build_graph, DEFAULT_PERCENTILE};
use fedgraph::rng::seeded;
use fedgraph::{Result, Tensor2};
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<()> {
    let mut rng = seeded(3);
    // Two recordings of 6 windows each; the second sits far from the first.
    let mut rows = Vec::new();
    for rec in 0..2 {
        for _ in 0..6 {
            let offset = 4.0 * rec as f64;
            rows.push(
                (0..4)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        offset + 0.5 * z
                    })
                    .collect::<Vec<f64>>(),
            );
        }
    }
    let features = Tensor2::from_rows(&rows)?;
    let runs = [0..6, 6..12];

    let g = build_graph(&features, &runs, DEFAULT_PERCENTILE, None)?;
    println!(
        "{} nodes, {} edges, threshold {:.3}",
        g.node_count(),
        g.edges.len(),
        g.threshold
    );
    let cross = g.edges.iter().filter(|&&(i, j)| i < 6 && j >= 6).count();
    println!("edges between recordings: {cross}");
    let row_sums: Vec<String> = (0..3)
        .map(|i| format!("{:.3}", g.adjacency.row(i).iter().sum::<f64>()))
        .collect();
    println!(
        "normalised adjacency row sums (first 3): {}",
        row_sums.join(" ")
    );

    let path = std::env::temp_dir().join("fedgraph_edges.csv");
    g.write_edge_csv(&features, &path)?;
    println!("edge list written to {}", path.display());
    Ok(())
}
