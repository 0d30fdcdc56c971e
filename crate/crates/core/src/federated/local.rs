use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::models::{flatten_tensors, loss_and_gradients, unflatten_like, ModelParams, ModelSpec};
use crate::numerics::{OptimizerKind, OptimizerState};
use crate::privacy::{add_gaussian_in_place, clip_global_in_place, PrivacySpec};
use crate::rng::{seeded, Rng};

use super::ClientState;

/// Local optimisation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Noise every local gradient instead of the round's update once.
    pub noise_every_local_step: bool,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            epochs: 20,
            batch_size: 32,
            noise_every_local_step: false,
        }
    }
}

impl LocalConfig {
    /// Optimiser steps one client takes per round.
    pub fn steps_for(&self, train_nodes: usize) -> usize {
        self.epochs * train_nodes.div_ceil(self.batch_size.max(1))
    }
}

/// Result of one client's local training.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    /// `w_c − w`, flattened in parameter order.
    pub delta: Vec<f64>,
    /// Mean mini-batch loss over all local steps; NaN when no step ran.
    pub mean_loss: f64,
    pub steps: usize,
    pub samples: usize,
}

/// Called after each epoch with its index, the parameters and the epoch's step losses.
pub(crate) type EpochHook<'a> = dyn FnMut(usize, &ModelParams, &[f64]) -> Result<()> + 'a;

/// Runs `cfg.epochs` epochs of shuffled mini-batch training in place.
/// Every gradient is clipped to `privacy.clip`; with `noise_each_step` it is
/// also perturbed with `N(0, σ²C²)`. `on_epoch` sees the parameters after
/// each epoch. Returns the per-step losses.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_epochs(
    client: &ClientState,
    spec: &ModelSpec,
    params: &mut ModelParams,
    privacy: &PrivacySpec,
    cfg: &LocalConfig,
    noise_each_step: bool,
    rng: &mut Rng,
    on_epoch: &mut EpochHook<'_>,
) -> Result<Vec<f64>> {
    if cfg.batch_size == 0 {
        return Err(Error::param("batch size must be positive"));
    }
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr);
    let mut losses = Vec::new();
    let mut order = client.train.clone();
    for epoch in 0..cfg.epochs {
        order.copy_from_slice(&client.train);
        order.shuffle(rng);
        let start = losses.len();
        for batch in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = batch.iter().map(|&i| client.labels[i]).collect();
            let (loss, grads) =
                loss_and_gradients(spec, params, &client.input, batch, &labels, true, rng)?;
            let mut flat = flatten_tensors(&grads);
            clip_global_in_place(&mut flat, privacy.clip);
            if noise_each_step {
                add_gaussian_in_place(&mut flat, privacy.sigma, privacy.clip, rng);
            }
            let grads = unflatten_like(&grads, &flat)?;
            opt.apply(params.tensors_mut(), &grads)?;
            losses.push(loss);
        }
        on_epoch(epoch, params, &losses[start..])?;
    }
    Ok(losses)
}

/// One client's contribution to a round, starting from the global `w`.
///
/// Without per-step noise a private run releases the whole update once: the
/// update is clipped to norm `lr·C` (the pseudo-gradient `−Δ/lr` to `C`) and
/// receives `lr·N(0, σ²C²)` per coordinate. A non-private run returns the
/// raw difference.
pub fn local_train(
    client: &ClientState,
    spec: &ModelSpec,
    w: &ModelParams,
    privacy: &PrivacySpec,
    cfg: &LocalConfig,
    seed: u64,
) -> Result<LocalUpdate> {
    let mut rng = seeded(seed);
    let mut local = w.clone();
    let per_step = cfg.noise_every_local_step;
    let losses = train_epochs(
        client,
        spec,
        &mut local,
        privacy,
        cfg,
        per_step,
        &mut rng,
        &mut |_, _, _| Ok(()),
    )?;
    let mut delta: Vec<f64> = local
        .flatten()
        .iter()
        .zip(w.flatten())
        .map(|(a, b)| a - b)
        .collect();
    if privacy.is_private() && !per_step {
        let bound = cfg.lr * privacy.clip;
        clip_global_in_place(&mut delta, bound);
        add_gaussian_in_place(&mut delta, privacy.sigma, bound, &mut rng);
    }
    let mean_loss = if losses.is_empty() {
        f64::NAN
    } else {
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    Ok(LocalUpdate {
        delta,
        mean_loss,
        steps: losses.len(),
        samples: client.train.len(),
    })
}
