//! Global-norm clipping and Gaussian perturbation of a flattened update.

use fedgraph::privacy::{add_gaussian, clip_global, l2_norm};
use fedgraph::rng::seeded;

fn main() {
    let grad = vec![3.0, -4.0, 12.0];
    println!("norm {}", l2_norm(&grad));
    for clip in [20.0, 5.0, 1.0] {
        let c = clip_global(&grad, clip);
        println!("clip {clip:>4}: {c:.4?} (norm {:.4})", l2_norm(&c));
    }

    // Noise has standard deviation sigma * clip per coordinate.
    let (sigma, clip) = (1.5, 1.0);
    let mut rng = seeded(1);
    let zeros = vec![0.0; 50_000];
    let noisy = add_gaussian(&zeros, sigma, clip, &mut rng);
    let var = noisy.iter().map(|v| v * v).sum::<f64>() / noisy.len() as f64;
    println!(
        "empirical noise std {:.4}, expected {:.4}",
        var.sqrt(),
        sigma * clip
    );
}
