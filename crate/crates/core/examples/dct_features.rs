//! Accelerometer window to DCT features, and the DCT round trip.

use fedgraph::dataio::encode_accel;
use fedgraph::numerics::{dct_1d, idct_1d};
use fedgraph::{Result, Tensor2};

fn main() -> Result<()> {
    // 5 s at 100 Hz of a 2 Hz oscillation on x, constant gravity on z.
    let frames = 500;
    let mut data = Vec::with_capacity(frames * 3);
    for t in 0..frames {
        let s = t as f64 / 100.0;
        data.extend([(2.0 * std::f64::consts::PI * 2.0 * s).sin(), 0.1 * s, 1.0]);
    }
    let block = Tensor2::from_vec(frames, 3, data)?;

    let features = encode_accel(&block, 60)?;
    println!("feature width {}", features.len());
    let head: Vec<String> = features[..6].iter().map(|v| format!("{v:.3}")).collect();
    println!("x channel, first coefficients: {}", head.join(" "));

    let signal: Vec<f64> = (0..32)
        .map(|i| (i as f64 * 0.4).cos() + 0.1 * i as f64)
        .collect();
    for keep in [32, 8, 2] {
        let back = idct_1d(&dct_1d(&signal, keep)?, signal.len())?;
        let err = signal
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("keep {keep:>2} of 32 coefficients: max reconstruction error {err:.2e}");
    }
    Ok(())
}
