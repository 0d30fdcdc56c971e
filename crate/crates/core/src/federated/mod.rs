//! Federated orchestration: client sampling, local training with client-level
//! DP, FedAvg aggregation, per-round evaluation and privacy accounting, and
//! the centralized degenerate case.

mod client;
mod local;

pub use client::{ClientState, GraphOptions};
pub use local::{local_train, LocalConfig, LocalUpdate};

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{accuracy, f1_score, F1Average};
use crate::models::{forward, init_params, predict_labels, ModelParams, ModelSpec, Prediction};
use crate::privacy::{AccountantState, PrivacySpec};
use crate::rng::{derive_seed, rng_from, seeded, Rng};

const STREAM_INIT: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_LOCAL: u64 = 3;

/// Uniform subset of `0..n` without replacement, of size `max(1, ⌊q·n⌋)`,
/// returned sorted.
pub fn sample_clients(n: usize, q: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::param(format!("client fraction {q} outside (0, 1]")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = ((q * n as f64).floor() as usize).clamp(1, n);
    Ok(sample_subset(n, m, rng))
}

/// Uniform `m`-subset of `0..n` (clamped to `n`), sorted.
pub fn sample_subset(n: usize, m: usize, rng: &mut Rng) -> Vec<usize> {
    let mut picked = index::sample(rng, n, m.min(n)).into_vec();
    picked.sort_unstable();
    picked
}

/// `w + Σ p_c Δ_c` with `p_c = 1/|S|`, or `p_c ∝ weights` when given.
pub fn fedavg_aggregate(
    w: &ModelParams,
    updates: &[&[f64]],
    weights: Option<&[f64]>,
) -> Result<ModelParams> {
    let flat = fedavg_flat(&w.flatten(), updates, weights)?;
    w.unflatten(&flat)
}

/// [`fedavg_aggregate`] on flat vectors.
pub fn fedavg_flat(w: &[f64], updates: &[&[f64]], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(Error::param("no updates to aggregate"));
    }
    if let Some(bad) = updates.iter().find(|u| u.len() != w.len()) {
        return Err(Error::shape("fedavg update", (w.len(), 1), (bad.len(), 1)));
    }
    let coef: Vec<f64> = match weights {
        None => vec![1.0 / updates.len() as f64; updates.len()],
        Some(ws) => {
            let total: f64 = ws.iter().sum();
            if ws.len() != updates.len() || !(total > 0.0) {
                return Err(Error::param("one positive weight per update required"));
            }
            ws.iter().map(|x| x / total).collect()
        }
    };
    let mut mean = vec![0.0; w.len()];
    for (u, c) in updates.iter().zip(&coef) {
        for (m, v) in mean.iter_mut().zip(u.iter()) {
            *m += c * v;
        }
    }
    Ok(w.iter().zip(mean).map(|(a, b)| a + b).collect())
}

/// Server-side settings of a federated run.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedConfig {
    pub local: LocalConfig,
    pub rounds: usize,
    pub client_fraction: f64,
    pub weighted_fedavg: bool,
    /// Keep a parameter snapshot every this many rounds; 0 keeps none.
    pub checkpoint_every: usize,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        Self {
            local: LocalConfig::default(),
            rounds: 50,
            client_fraction: 1.0,
            weighted_fedavg: false,
            checkpoint_every: 0,
        }
    }
}

/// Metrics after one round (or one epoch for centralized runs).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub sampled: Vec<usize>,
    pub client_losses: Vec<f64>,
    pub train_loss_mean: f64,
    pub test_accuracy: f64,
    pub test_f1: f64,
    /// `None` for non-private runs.
    pub epsilon: Option<f64>,
}

/// One line of the privacy audit log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccountantEntry {
    pub round: usize,
    pub alpha_star: u32,
    pub gamma_cum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub params: ModelParams,
    pub reports: Vec<RoundReport>,
    pub accountant: Vec<AccountantEntry>,
    /// `(round, params)` after every checkpointed round or epoch.
    pub checkpoints: Vec<(usize, ModelParams)>,
}

fn due(every: usize, round: usize) -> bool {
    every > 0 && (round + 1).is_multiple_of(every)
}

/// Test-node predictions pooled over clients.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predicted: Vec<usize>,
    pub labels: Vec<usize>,
    pub accuracy: f64,
    pub f1: f64,
}

/// Eval-mode forward pass over a client's whole graph.
pub fn predict_client(
    client: &ClientState,
    spec: &ModelSpec,
    params: &ModelParams,
) -> Result<Prediction> {
    forward(spec, params, &client.input, false, &mut seeded(0))
}

/// Example-weighted accuracy and F1 over every client's test nodes.
pub fn evaluate(
    clients: &[ClientState],
    spec: &ModelSpec,
    params: &ModelParams,
    average: F1Average,
) -> Result<Evaluation> {
    let per_client: Vec<(Vec<usize>, Vec<usize>)> = clients
        .par_iter()
        .filter(|c| !c.test.is_empty())
        .map(|c| {
            let pred = predict_labels(&predict_client(c, spec, params)?.logits);
            Ok((
                c.test.iter().map(|&i| pred[i]).collect(),
                c.test.iter().map(|&i| c.labels[i]).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let (mut predicted, mut labels) = (Vec::new(), Vec::new());
    for (p, l) in per_client {
        predicted.extend(p);
        labels.extend(l);
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("no test nodes to evaluate".into()));
    }
    Ok(Evaluation {
        accuracy: accuracy(&predicted, &labels)?,
        f1: f1_score(&predicted, &labels, spec.classes, average)?,
        predicted,
        labels,
    })
}

fn finite_mean(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

fn account(
    accountant: &mut Option<AccountantState>,
    privacy: &PrivacySpec,
    steps: u64,
    round: usize,
    log: &mut Vec<AccountantEntry>,
) -> Result<Option<f64>> {
    let Some(acc) = accountant.as_mut() else {
        return Ok(None);
    };
    if steps > 0 {
        acc.compose(privacy.sample_rate, privacy.sigma, steps)?;
    }
    let (epsilon, alpha_star) = acc.epsilon(privacy.delta)?;
    let idx = acc
        .orders()
        .iter()
        .position(|&a| a == alpha_star)
        .expect("order on grid");
    log.push(AccountantEntry {
        round,
        alpha_star,
        gamma_cum: acc.rdp()[idx],
        epsilon,
    });
    Ok(Some(epsilon))
}

fn check_setup(clients: &[ClientState], spec: &ModelSpec, privacy: &PrivacySpec) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::param("no clients"));
    }
    privacy.validate()?;
    clients.iter().try_for_each(|c| c.check(spec))
}

/// Initial global parameters for a run seeded with `seed`.
pub fn initial_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    init_params(spec, derive_seed(seed, &[STREAM_INIT]))
}

/// Seed of client `client`'s local training in round `round`.
pub fn local_seed(seed: u64, round: usize, client: usize) -> u64 {
    derive_seed(seed, &[STREAM_LOCAL, round as u64, client as u64])
}

/// Seeded federated training with per-round evaluation.
pub fn run_federated(
    clients: &[ClientState],
    spec: &ModelSpec,
    cfg: &FederatedConfig,
    privacy: &PrivacySpec,
    average: F1Average,
    seed: u64,
) -> Result<TrainingRun> {
    check_setup(clients, spec, privacy)?;
    let mut params = initial_params(spec, seed)?;
    let mut accountant = privacy.is_private().then(AccountantState::default);
    let mut reports = Vec::with_capacity(cfg.rounds);
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    for round in 0..cfg.rounds {
        let sampled = sample_clients(
            clients.len(),
            cfg.client_fraction,
            &mut rng_from(seed, &[STREAM_SAMPLE, round as u64]),
        )?;
        let results: Vec<Option<LocalUpdate>> = sampled
            .par_iter()
            .map(|&c| {
                let client = &clients[c];
                if client.train.is_empty() {
                    log::warn!(
                        "round {round}: client {} has no training nodes; skipped",
                        client.id
                    );
                    return Ok(None);
                }
                local_train(
                    client,
                    spec,
                    &params,
                    privacy,
                    &cfg.local,
                    local_seed(seed, round, c),
                )
                .map(Some)
            })
            .collect::<Result<_>>()?;
        let updates: Vec<&LocalUpdate> = results.iter().flatten().collect();
        if updates.is_empty() {
            log::warn!("round {round}: no client updates; round skipped");
        } else {
            let deltas: Vec<&[f64]> = updates.iter().map(|u| u.delta.as_slice()).collect();
            let weights: Vec<f64> = updates.iter().map(|u| u.samples as f64).collect();
            params = fedavg_aggregate(
                &params,
                &deltas,
                cfg.weighted_fedavg.then_some(weights.as_slice()),
            )?;
        }
        let releases = if cfg.local.noise_every_local_step {
            updates.iter().map(|u| u.steps).max().unwrap_or(0) as u64
        } else {
            u64::from(!updates.is_empty())
        };
        let epsilon = account(&mut accountant, privacy, releases, round, &mut log)?;
        let eval = evaluate(clients, spec, &params, average)?;
        let client_losses: Vec<f64> = updates.iter().map(|u| u.mean_loss).collect();
        log::info!("round {round}: accuracy {:.4}", eval.accuracy);
        if due(cfg.checkpoint_every, round) {
            checkpoints.push((round, params.clone()));
        }
        reports.push(RoundReport {
            round,
            sampled,
            train_loss_mean: finite_mean(&client_losses),
            client_losses,
            test_accuracy: eval.accuracy,
            test_f1: eval.f1,
            epsilon,
        });
    }
    Ok(TrainingRun {
        params,
        reports,
        accountant: log,
        checkpoints,
    })
}

/// All clients pooled into one disconnected graph and trained by a single
/// learner for `local.epochs` epochs; every gradient step goes through the
/// clip-and-noise path. Reports are per epoch; `checkpoint_every` counts
/// epochs.
pub fn run_centralized(
    clients: &[ClientState],
    spec: &ModelSpec,
    local: &LocalConfig,
    privacy: &PrivacySpec,
    average: F1Average,
    seed: u64,
    checkpoint_every: usize,
) -> Result<TrainingRun> {
    check_setup(clients, spec, privacy)?;
    let pooled = ClientState::pooled(clients)?;
    if pooled.train.is_empty() {
        return Err(Error::param("no training nodes after pooling"));
    }
    let mut params = initial_params(spec, seed)?;
    let mut accountant = privacy.is_private().then(AccountantState::default);
    let mut reports = Vec::with_capacity(local.epochs);
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut rng = seeded(local_seed(seed, 0, 0));
    let pooled_ref = std::slice::from_ref(&pooled);
    local::train_epochs(
        &pooled,
        spec,
        &mut params,
        privacy,
        local,
        true,
        &mut rng,
        &mut |epoch, p, losses| {
            let epsilon = account(
                &mut accountant,
                privacy,
                losses.len() as u64,
                epoch,
                &mut log,
            )?;
            let eval = evaluate(pooled_ref, spec, p, average)?;
            reports.push(RoundReport {
                round: epoch,
                sampled: vec![0],
                client_losses: vec![finite_mean(losses)],
                train_loss_mean: finite_mean(losses),
                test_accuracy: eval.accuracy,
                test_f1: eval.f1,
                epsilon,
            });
            if due(checkpoint_every, epoch) {
                checkpoints.push((epoch, p.clone()));
            }
            Ok(())
        },
    )?;
    Ok(TrainingRun {
        params,
        reports,
        accountant: log,
        checkpoints,
    })
}
