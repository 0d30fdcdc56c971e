use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataio::{
    generate_synthetic, load_mex_layout, prepare_mex, write_synthetic_mex, PipelineConfig,
    PreparedClient,
};
use crate::error::{Error, Result};
use crate::eval::{
    confusion, export_embeddings, f1_score, quadratic_testbed, utility_loss, F1Average, Trajectory,
};
use crate::federated::{
    evaluate, predict_client, run_centralized, run_federated, ClientState, FederatedConfig,
    LocalConfig, TrainingRun,
};
use crate::models::ModelSpec;
use crate::privacy::{calibrate_sigma, PrivacySpec};
use crate::rng::derive_seed;

use super::config::{resolve, DataSource, ExperimentConfig, Mode, RawConfig};

const STREAM_SPLIT: u64 = 0x5b;

/// Encoded, split and graph-built clients for the replicate seeded `seed`.
pub fn prepare_clients(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ClientState>> {
    let prepared: Vec<PreparedClient> = match &cfg.data.source {
        DataSource::Synthetic => generate_synthetic(&cfg.synthetic_spec(seed))?
            .into_iter()
            .enumerate()
            .map(|(ci, ws)| {
                PreparedClient::split(
                    ws,
                    cfg.data.train_fraction,
                    derive_seed(seed, &[STREAM_SPLIT, ci as u64]),
                )
            })
            .collect::<Result<_>>()?,
        DataSource::Mex(path) => {
            let recs = load_mex_layout(path)?;
            let pipeline = PipelineConfig {
                modalities: cfg.modalities.clone(),
                window_secs: cfg.data.window_secs,
                stride_secs: cfg.data.stride_secs,
                dct_keep: cfg.data.dct_keep,
                train_fraction: cfg.data.train_fraction,
                autoencoder_epochs: cfg.data.autoencoder_epochs,
                seed,
                ..PipelineConfig::default()
            };
            prepare_mex(&recs, &pipeline)?
        }
    };
    prepared
        .par_iter()
        .map(|p| ClientState::new(p, &cfg.graph))
        .collect()
}

pub fn model_spec(cfg: &ExperimentConfig, clients: &[ClientState]) -> Result<ModelSpec> {
    let first = clients.first().ok_or_else(|| Error::param("no clients"))?;
    let classes = clients
        .iter()
        .flat_map(|c| c.labels.iter().copied())
        .max()
        .map_or(0, |m| m + 1)
        .max(match cfg.data.source {
            DataSource::Synthetic => cfg.synthetic.classes,
            DataSource::Mex(_) => 0,
        });
    let spec = ModelSpec {
        kind: cfg.model,
        input_dims: first.input.features.iter().map(|f| f.cols()).collect(),
        hidden: cfg.training.hidden,
        classes,
        layers: cfg.training.layers,
        dropout: cfg.training.dropout,
    };
    spec.validate()?;
    Ok(spec)
}

fn local_config(cfg: &ExperimentConfig) -> LocalConfig {
    let t = &cfg.training;
    LocalConfig {
        optimizer: t.optimizer,
        lr: t.lr,
        epochs: match cfg.mode {
            Mode::Federated => t.local_epochs,
            Mode::Centralized => t.epochs,
        },
        batch_size: t.batch,
        noise_every_local_step: cfg.privacy.noise_every_local_step,
    }
}

/// Number of noisy releases the accountant composes over a whole run.
pub fn planned_releases(cfg: &ExperimentConfig, clients: &[ClientState]) -> u64 {
    let local = local_config(cfg);
    match cfg.mode {
        Mode::Federated if cfg.privacy.noise_every_local_step => {
            let steps = clients
                .iter()
                .map(|c| local.steps_for(c.train.len()))
                .max()
                .unwrap_or(0);
            (cfg.training.rounds * steps) as u64
        }
        Mode::Federated => cfg.training.rounds as u64,
        Mode::Centralized => {
            let train: usize = clients.iter().map(|c| c.train.len()).sum();
            local.steps_for(train) as u64
        }
    }
}

/// Privacy parameters with σ calibrated to the target ε over the planned
/// releases; the non-private spec when ε is `none`.
pub fn privacy_spec(cfg: &ExperimentConfig, clients: &[ClientState]) -> Result<PrivacySpec> {
    let p = &cfg.privacy;
    let Some(epsilon) = p.epsilon else {
        return Ok(PrivacySpec {
            delta: p.delta,
            sample_rate: p.sample_rate,
            ..PrivacySpec::non_private()
        });
    };
    let steps = planned_releases(cfg, clients).max(1);
    Ok(PrivacySpec {
        epsilon: Some(epsilon),
        delta: p.delta,
        sigma: calibrate_sigma(epsilon, p.delta, p.sample_rate, steps)?,
        clip: p.clip,
        sample_rate: p.sample_rate,
        steps,
    })
}

/// Outcome of one seeded replicate.
#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub seed: u64,
    pub clients: Vec<ClientState>,
    pub spec: ModelSpec,
    pub privacy: PrivacySpec,
    pub run: TrainingRun,
    pub accuracy: f64,
    pub f1: f64,
    pub predicted: Vec<usize>,
    pub labels: Vec<usize>,
}

pub fn run_replicate(cfg: &ExperimentConfig, seed: u64) -> Result<ReplicateResult> {
    let clients = prepare_clients(cfg, seed)?;
    let spec = model_spec(cfg, &clients)?;
    let privacy = privacy_spec(cfg, &clients)?;
    let local = local_config(cfg);
    let run = match cfg.mode {
        Mode::Federated => {
            let fed = FederatedConfig {
                local,
                rounds: cfg.training.rounds,
                client_fraction: cfg.training.client_fraction,
                weighted_fedavg: cfg.training.weighted_fedavg,
                checkpoint_every: cfg.checkpoint_every,
            };
            run_federated(&clients, &spec, &fed, &privacy, cfg.f1, seed)?
        }
        Mode::Centralized => run_centralized(
            &clients,
            &spec,
            &local,
            &privacy,
            cfg.f1,
            seed,
            cfg.checkpoint_every,
        )?,
    };
    let eval = evaluate(&clients, &spec, &run.params, cfg.f1)?;
    Ok(ReplicateResult {
        seed,
        clients,
        spec,
        privacy,
        run,
        accuracy: eval.accuracy,
        f1: eval.f1,
        predicted: eval.predicted,
        labels: eval.labels,
    })
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub model: String,
    pub setting: String,
    pub epsilon: Option<f64>,
    /// Median over replicates.
    pub accuracy: f64,
    pub f1: f64,
    pub utility_loss: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "model,setting,epsilon,accuracy,f1,utility_loss";

impl Summary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.16e},{:.16e},{}",
            self.model,
            self.setting,
            self.epsilon.map_or("none".into(), |e| format!("{e:.16e}")),
            self.accuracy,
            self.f1,
            self.utility_loss
                .map_or("nan".into(), |u| format!("{u:.16e}")),
        )
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Results and artifact location of one grid cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    pub summary: Summary,
    pub accuracies: Vec<f64>,
    pub f1s: Vec<f64>,
    /// Calibrated σ (0 when non-private) and the release count it was
    /// calibrated for.
    pub sigma: f64,
    pub releases: u64,
}

/// Tracks written files so a failure can still leave a truthful MANIFEST.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.record(name);
        Ok(())
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    fn finish(&self, failure: Option<&Error>) -> Result<()> {
        let mut text = match failure {
            None => "status = complete\n".to_string(),
            Some(e) => format!("status = incomplete\nerror = {e}\n"),
        };
        for f in &self.files {
            writeln!(text, "{f}").expect("string write");
        }
        let path = self.dir.join("MANIFEST");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| format!("{x:.16e}"))
}

fn write_cell(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<CellOutcome> {
    art.write("config.txt", &cfg.echo())?;
    let mut metrics =
        String::from("replicate,round,epsilon,train_loss_mean,test_accuracy,test_f1\n");
    let mut ledger = String::from("replicate,round,alpha_star,gamma_cum,epsilon_spent\n");
    let mut f1_csv = String::from("replicate,macro,micro,weighted\n");
    let mut privacy_csv =
        String::from("replicate,sigma,releases,sample_rate,delta,epsilon_target,epsilon_spent\n");
    let (mut accuracies, mut f1s) = (Vec::new(), Vec::new());
    let (mut sigma, mut releases) = (0.0, 0);
    for r in 0..cfg.replicates {
        let seed = cfg.seed.wrapping_add(r as u64);
        let res = run_replicate(cfg, seed)?;
        for rep in &res.run.reports {
            writeln!(
                metrics,
                "{r},{},{},{:.16e},{:.16e},{:.16e}",
                rep.round,
                fmt_opt(rep.epsilon),
                rep.train_loss_mean,
                rep.test_accuracy,
                rep.test_f1
            )
            .expect("string write");
        }
        for e in &res.run.accountant {
            writeln!(
                ledger,
                "{r},{},{},{:.16e},{:.16e}",
                e.round, e.alpha_star, e.gamma_cum, e.epsilon
            )
            .expect("string write");
        }
        let spent = res.run.accountant.last().map(|e| e.epsilon);
        writeln!(
            privacy_csv,
            "{r},{:.16e},{},{:.16e},{:.16e},{},{}",
            res.privacy.sigma,
            res.privacy.steps,
            res.privacy.sample_rate,
            res.privacy.delta,
            fmt_opt(res.privacy.epsilon),
            fmt_opt(spent)
        )
        .expect("string write");
        let k = res.spec.classes;
        let f1_of = |avg| f1_score(&res.predicted, &res.labels, k, avg);
        writeln!(
            f1_csv,
            "{r},{:.16e},{:.16e},{:.16e}",
            f1_of(F1Average::Macro)?,
            f1_of(F1Average::Micro)?,
            f1_of(F1Average::Weighted)?
        )
        .expect("string write");
        let cm = confusion(&res.predicted, &res.labels, res.spec.classes)?;
        art.write(&format!("confusion_r{r}.csv"), &cm.to_csv())?;
        let pooled = ClientState::pooled(&res.clients)?;
        let pred = predict_client(&pooled, &res.spec, &res.run.params)?;
        let nodes: Vec<usize> = (0..pooled.nodes()).collect();
        let name = format!("embeddings_r{r}.csv");
        export_embeddings(&pred, &nodes, &pooled.labels, &art.dir.join(&name))?;
        art.record(&name);
        for (round, params) in &res.run.checkpoints {
            let name = format!("checkpoint_r{r}_{round:05}.bin");
            params.save(&art.dir.join(&name))?;
            art.record(&name);
        }
        accuracies.push(res.accuracy);
        f1s.push(res.f1);
        sigma = res.privacy.sigma;
        releases = res.privacy.steps;
        log::info!(
            "{}: replicate {r} accuracy {:.4}",
            art.dir.display(),
            res.accuracy
        );
    }
    art.write("metrics.csv", &metrics)?;
    art.write("accountant.csv", &ledger)?;
    art.write("privacy.csv", &privacy_csv)?;
    art.write("f1.csv", &f1_csv)?;
    let summary = Summary {
        model: cfg.model.name().into(),
        setting: cfg.mode.name().into(),
        epsilon: cfg.privacy.epsilon,
        accuracy: median(&accuracies),
        f1: median(&f1s),
        utility_loss: None,
    };
    Ok(CellOutcome {
        config: cfg.clone(),
        dir: art.dir.clone(),
        summary,
        accuracies,
        f1s,
        sigma,
        releases,
    })
}

/// Runs every replicate of one resolved cell and writes its artifacts into
/// `dir`. The summary's utility loss is left unset.
pub fn run_cell(cfg: &ExperimentConfig, dir: &Path) -> Result<CellOutcome> {
    let mut art = Artifacts::new(dir)?;
    match write_cell(cfg, &mut art) {
        Ok(out) => {
            art.finish(None)?;
            Ok(out)
        }
        Err(e) => {
            // best effort: the original error matters more than this one
            let _ = art.finish(Some(&e));
            Err(e)
        }
    }
}

fn baseline_key(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.privacy.epsilon = None;
    c.output = PathBuf::new();
    c
}

/// Median non-private accuracy for the same setup, without artifacts.
fn baseline_accuracy(cfg: &ExperimentConfig) -> Result<f64> {
    let base = baseline_key(cfg);
    let accs = (0..base.replicates)
        .map(|r| run_replicate(&base, base.seed.wrapping_add(r as u64)).map(|res| res.accuracy))
        .collect::<Result<Vec<_>>>()?;
    Ok(median(&accs))
}

/// Resolved cells of a raw config with their artifact directories. A
/// config without sweeps is a single cell writing straight into
/// `output.dir`.
pub fn expand(raw: &RawConfig) -> Result<Vec<(ExperimentConfig, PathBuf)>> {
    let cells = raw.cells();
    let single = raw.sweeps.is_empty();
    cells
        .iter()
        .enumerate()
        .map(|(i, overrides)| {
            let cfg = resolve(&raw.with_overrides(overrides))?;
            let dir = if single {
                cfg.output.clone()
            } else {
                cfg.output.join(format!("cell{i:03}"))
            };
            Ok((cfg, dir))
        })
        .collect()
}

/// Validates every cell, runs them concurrently, fills utility losses
/// (from a matching non-private cell when the grid has one) and writes the
/// grid's `summary.csv` and MANIFEST.
pub fn run_experiment(raw: &RawConfig) -> Result<Vec<CellOutcome>> {
    let cells = expand(raw)?;
    let root = cells[0].0.output.clone();
    let mut outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|(cfg, dir)| run_cell(cfg, dir))
        .collect::<Result<_>>()?;
    let baselines: Vec<(ExperimentConfig, f64)> = outcomes
        .iter()
        .filter(|o| o.config.privacy.epsilon.is_none())
        .map(|o| (baseline_key(&o.config), o.summary.accuracy))
        .collect();
    for o in &mut outcomes {
        let acc_nodp = if o.config.privacy.epsilon.is_none() {
            o.summary.accuracy
        } else {
            let key = baseline_key(&o.config);
            match baselines.iter().find(|(k, _)| *k == key) {
                Some((_, acc)) => *acc,
                None => baseline_accuracy(&o.config)?,
            }
        };
        o.summary.utility_loss = match utility_loss(o.summary.accuracy, acc_nodp) {
            Ok(u) => Some(u),
            Err(Error::UndefinedMetric(msg)) => {
                log::warn!("{}: utility loss undefined: {msg}", o.dir.display());
                None
            }
            Err(e) => return Err(e),
        };
        let text = format!("{SUMMARY_HEADER}\n{}\n", o.summary.csv_row());
        let path = o.dir.join("summary.csv");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let manifest = o.dir.join("MANIFEST");
        let mut m = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        m.push_str("summary.csv\n");
        fs::write(&manifest, m).map_err(|e| Error::io(&manifest, e))?;
    }
    if !raw.sweeps.is_empty() {
        let mut art = Artifacts::new(&root)?;
        let mut text = format!("cell,{SUMMARY_HEADER}\n");
        for (i, o) in outcomes.iter().enumerate() {
            writeln!(text, "cell{i:03},{}", o.summary.csv_row()).expect("string write");
        }
        art.write("summary.csv", &text)?;
        for i in 0..outcomes.len() {
            art.record(&format!("cell{i:03}/MANIFEST"));
        }
        art.finish(None)?;
    }
    Ok(outcomes)
}

/// Runs the quadratic testbed for one resolved config and writes
/// `trajectory.csv`, the config echo and a MANIFEST into `dir`.
pub fn run_testbed(cfg: &ExperimentConfig, dir: &Path) -> Result<Trajectory> {
    let mut art = Artifacts::new(dir)?;
    let tb = &cfg.testbed;
    let traj = quadratic_testbed(&tb.params, tb.clients, tb.rounds, tb.replicates, cfg.seed);
    match traj {
        Ok(t) => {
            art.write("config.txt", &cfg.echo())?;
            art.write("trajectory.csv", &t.to_csv())?;
            art.finish(None)?;
            Ok(t)
        }
        Err(e) => {
            let _ = art.finish(Some(&e));
            Err(e)
        }
    }
}

/// Writes the synthetic dataset described by `cfg` in the MEx layout under
/// `cfg.output`.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let spec = cfg.synthetic_spec(cfg.seed);
    write_synthetic_mex(
        &spec,
        &cfg.output,
        cfg.data.window_secs,
        cfg.data.stride_secs,
    )?;
    Ok(cfg.output.clone())
}
