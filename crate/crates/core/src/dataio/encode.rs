use super::recording::FrameBlock;
use crate::error::{Error, Result};
use crate::numerics::{dct_1d, glorot_uniform, OptimizerState, Tape, Tensor2};
use crate::rng::{rng_from, Rng};

/// Per-axis DCT of an accelerometer block, keeping `keep` coefficients per
/// axis, concatenated x, y, z.
pub fn encode_accel(block: &Tensor2, keep: usize) -> Result<Vec<f64>> {
    if block.cols() != 3 {
        return Err(Error::shape(
            "encode_accel",
            block.shape(),
            (block.rows(), 3),
        ));
    }
    let mut out = Vec::with_capacity(3 * keep);
    for axis in 0..3 {
        out.extend(dct_1d(&block.column(axis), keep)?);
    }
    Ok(out)
}

/// Mean over the frames of a block, as a 1×width row.
pub(crate) fn mean_pool(block: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(1, block.cols());
    for r in 0..block.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(block.row(r)) {
            *o += v;
        }
    }
    let n = block.rows().max(1) as f64;
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderConfig {
    pub hidden: usize,
    pub latent: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            latent: 64,
            lr: 1e-3,
            batch: 32,
        }
    }
}

/// Encoder half of the autoencoder: `relu(x·W1 + b1)·W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub w1: Tensor2,
    pub b1: Tensor2,
    pub w2: Tensor2,
    pub b2: Tensor2,
}

impl Encoder {
    pub fn input_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w2.cols()
    }

    /// Encodes each row of `x`.
    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.input_width() {
            return Err(Error::shape("encoder input", x.shape(), self.w1.shape()));
        }
        let h = x.matmul(&self.w1)?.add_row(&self.b1)?.relu();
        h.matmul(&self.w2)?.add_row(&self.b2)
    }

    /// Mean-pools the frames of `block` and encodes the pooled frame.
    pub fn encode_block(&self, block: &Tensor2) -> Result<Vec<f64>> {
        if block.cols() != self.input_width() {
            return Err(Error::shape(
                "encode_image_modality",
                block.shape(),
                self.w1.shape(),
            ));
        }
        Ok(self.forward(&mean_pool(block))?.into_vec())
    }
}

/// A trained encoder plus the per-epoch reconstruction loss.
#[derive(Debug, Clone)]
pub struct AutoencoderFit {
    pub encoder: Encoder,
    /// Mean squared reconstruction error before training, then after each epoch.
    pub loss_history: Vec<f64>,
}

struct Autoencoder {
    params: Vec<Tensor2>,
}

impl Autoencoder {
    fn init(input: usize, cfg: &AutoencoderConfig, rng: &mut Rng) -> Self {
        let dims = [
            (input, cfg.hidden),
            (cfg.hidden, cfg.latent),
            (cfg.latent, cfg.hidden),
            (cfg.hidden, input),
        ];
        let mut params = Vec::new();
        for (i, o) in dims {
            params.push(glorot_uniform(i, o, rng));
            params.push(Tensor2::zeros(1, o));
        }
        Self { params }
    }

    fn loss(&self, tape: &mut Tape, x: &Tensor2) -> Result<crate::numerics::Var> {
        let p: Vec<_> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t))
            .collect();
        let mut h = tape.input(x.clone());
        for layer in 0..4 {
            h = tape.matmul(h, p[2 * layer])?;
            h = tape.add_row(h, p[2 * layer + 1])?;
            // relu after the first encoder and first decoder layer
            if layer == 0 || layer == 2 {
                h = tape.relu(h);
            }
        }
        tape.mse(h, x)
    }

    fn mse(&self, x: &Tensor2) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.loss(&mut tape, x)?;
        Ok(tape.value(l).item())
    }
}

/// Trains a mirrored `width → hidden → latent → hidden → width` autoencoder
/// on the mean-pooled frames of `blocks` and returns the encoder half.
pub fn train_autoencoder(
    blocks: &[FrameBlock],
    epochs: usize,
    seed: u64,
    cfg: &AutoencoderConfig,
) -> Result<AutoencoderFit> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::param("autoencoder needs at least one block"))?;
    let width = first.frames.cols();
    let mut pooled = Tensor2::zeros(blocks.len(), width);
    for (i, b) in blocks.iter().enumerate() {
        if b.frames.cols() != width {
            return Err(Error::shape(
                "autoencoder input",
                first.frames.shape(),
                b.frames.shape(),
            ));
        }
        pooled
            .row_mut(i)
            .copy_from_slice(mean_pool(&b.frames).data());
    }
    train_autoencoder_rows(&pooled, epochs, seed, cfg)
}

/// As [`train_autoencoder`] but on already pooled rows.
pub(crate) fn train_autoencoder_rows(
    data: &Tensor2,
    epochs: usize,
    seed: u64,
    cfg: &AutoencoderConfig,
) -> Result<AutoencoderFit> {
    if data.rows() == 0 {
        return Err(Error::param("autoencoder needs at least one block"));
    }
    let mut rng = rng_from(seed, &[0xae]);
    let mut model = Autoencoder::init(data.cols(), cfg, &mut rng);
    let mut opt = OptimizerState::adam(cfg.lr);
    let mut history = vec![model.mse(data)?];
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let batch = cfg.batch.max(1);
    for _ in 0..epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(batch) {
            let x = data.gather_rows(chunk)?;
            let mut tape = Tape::new();
            let l = model.loss(&mut tape, &x)?;
            let mut g = tape.backward(l)?;
            let grads: Vec<Tensor2> = (0..model.params.len())
                .map(|i| g.take(i).expect("slot"))
                .collect();
            opt.apply(&mut model.params, &grads)?;
        }
        history.push(model.mse(data)?);
    }
    let p = model.params;
    Ok(AutoencoderFit {
        encoder: Encoder {
            w1: p[0].clone(),
            b1: p[1].clone(),
            w2: p[2].clone(),
            b2: p[3].clone(),
        },
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::idct_1d;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn block_from(frames: Tensor2) -> FrameBlock {
        FrameBlock {
            frames,
            label: 0,
            start_frame: 0,
        }
    }

    #[test]
    fn accel_zero_and_constant_blocks() {
        let z = encode_accel(&Tensor2::zeros(500, 3), 60).unwrap();
        assert_eq!(z, vec![0.0; 180]);
        let mut c = Tensor2::zeros(500, 3);
        for r in 0..500 {
            c.row_mut(r).copy_from_slice(&[1.0, -2.0, 0.5]);
        }
        let e = encode_accel(&c, 60).unwrap();
        for axis in 0..3 {
            assert!(e[axis * 60].abs() > 1.0);
            assert!(e[axis * 60 + 1..(axis + 1) * 60]
                .iter()
                .all(|v| v.abs() < 1e-10));
        }
        assert!(encode_accel(&Tensor2::zeros(500, 4), 60).is_err());
    }

    #[test]
    fn accel_is_per_axis_dct() {
        let mut rng = seeded(4);
        let data = (0..1500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let block = Tensor2::from_vec(500, 3, data).unwrap();
        let e = encode_accel(&block, 60).unwrap();
        for axis in 0..3 {
            let col = block.column(axis);
            // direct cosine sum oracle
            for k in 0..60 {
                let s: f64 = col
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        x * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / 500.0).cos()
                    })
                    .sum();
                let a = if k == 0 {
                    (1.0f64 / 500.0).sqrt()
                } else {
                    (2.0f64 / 500.0).sqrt()
                };
                assert!((e[axis * 60 + k] - a * s).abs() < 1e-9);
            }
        }
        // keeping everything reconstructs the axis
        let full = dct_1d(&block.column(1), 500).unwrap();
        let back = idct_1d(&full, 500).unwrap();
        assert!(back
            .iter()
            .zip(block.column(1))
            .all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn encoder_matches_manual_arithmetic() {
        let mut rng = seeded(8);
        let enc = Encoder {
            w1: glorot_uniform(6, 5, &mut rng),
            b1: glorot_uniform(1, 5, &mut rng),
            w2: glorot_uniform(5, 4, &mut rng),
            b2: glorot_uniform(1, 4, &mut rng),
        };
        let frames =
            Tensor2::from_vec(3, 6, (0..18).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let got = enc.encode_block(&frames).unwrap();
        let pooled: Vec<f64> = (0..6)
            .map(|c| (0..3).map(|r| frames.get(r, c)).sum::<f64>() / 3.0)
            .collect();
        for (j, &g) in got.iter().enumerate() {
            let mut z = enc.b2.get(0, j);
            for h in 0..5 {
                let mut a = enc.b1.get(0, h);
                for (c, p) in pooled.iter().enumerate() {
                    a += p * enc.w1.get(c, h);
                }
                z += a.max(0.0) * enc.w2.get(h, j);
            }
            assert!((g - z).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_block_zero_bias_encodes_to_zero() {
        let mut rng = seeded(1);
        let enc = Encoder {
            w1: glorot_uniform(192, 256, &mut rng),
            b1: Tensor2::zeros(1, 256),
            w2: glorot_uniform(256, 64, &mut rng),
            b2: Tensor2::zeros(1, 64),
        };
        let out = enc.encode_block(&Tensor2::zeros(75, 192)).unwrap();
        assert_eq!(out, vec![0.0; 64]);
        assert!(enc.encode_block(&Tensor2::zeros(75, 512)).is_err());
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let mut rng = seeded(12);
        let blocks: Vec<FrameBlock> = (0..24)
            .map(|_| {
                let d = (0..5 * 192).map(|_| rng.random_range(-1.0..1.0)).collect();
                block_from(Tensor2::from_vec(5, 192, d).unwrap())
            })
            .collect();
        let cfg = AutoencoderConfig::default();
        let a = train_autoencoder(&blocks, 20, 3, &cfg).unwrap();
        let b = train_autoencoder(&blocks, 20, 3, &cfg).unwrap();
        assert!(a.loss_history.last().unwrap() < &a.loss_history[0]);
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.encoder.latent_dim(), 64);
        assert!(train_autoencoder(&[], 5, 1, &cfg).is_err());
    }

    #[test]
    fn rank_one_data_is_reconstructed() {
        let mut rng = seeded(21);
        let pattern: Vec<f64> = (0..192).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = 64;
        let mut data = Tensor2::zeros(n, 192);
        for r in 0..n {
            let a = rng.random_range(-2.0..2.0);
            for (o, p) in data.row_mut(r).iter_mut().zip(&pattern) {
                *o = a * p;
            }
        }
        let mean = data.sum() / data.len() as f64;
        let variance =
            data.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / data.len() as f64;
        let fit = train_autoencoder_rows(&data, 200, 5, &AutoencoderConfig::default()).unwrap();
        let last = *fit.loss_history.last().unwrap();
        assert!(last < 0.01 * variance, "mse {last} vs variance {variance}");
    }
}
