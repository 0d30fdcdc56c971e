//! Trains the frame autoencoder on mean-pooled camera windows and encodes one.

use fedgraph::dataio::{train_autoencoder, AutoencoderConfig, FrameBlock};
use fedgraph::rng::seeded;
use fedgraph::{Result, Tensor2};
use rand::Rng as _;

fn main() -> Result<()> {
    let mut rng = seeded(5);
    let width = 192;
    // Each window is 10 noisy frames around one of three prototypes.
    let protos: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..width).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let blocks: Vec<FrameBlock> = (0..60)
        .map(|i| {
            let p = &protos[i % 3];
            let data = (0..10)
                .flat_map(|_| {
                    p.iter()
                        .map(|v| v + rng.random_range(-0.1..0.1))
                        .collect::<Vec<_>>()
                })
                .collect();
            FrameBlock {
                frames: Tensor2::from_vec(10, width, data).expect("block shape"),
                label: i % 3,
                start_frame: 0,
            }
        })
        .collect();

    let cfg = AutoencoderConfig {
        hidden: 64,
        latent: 16,
        ..AutoencoderConfig::default()
    };
    let fit = train_autoencoder(&blocks, 30, 9, &cfg)?;
    let first = fit.loss_history.first().copied().unwrap_or(f64::NAN);
    let last = fit.loss_history.last().copied().unwrap_or(f64::NAN);
    println!(
        "reconstruction mse {first:.4} -> {last:.4} over {} epochs",
        fit.loss_history.len() - 1
    );

    let code = fit.encoder.encode_block(&blocks[0].frames)?;
    println!("latent code width {}", code.len());
    Ok(())
}
