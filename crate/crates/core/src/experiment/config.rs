use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataio::{Modality, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{ConvergenceBoundParams, F1Average};
use crate::federated::GraphOptions;
use crate::models::ModelKind;
use crate::numerics::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Federated,
    Centralized,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Federated => "federated",
            Mode::Centralized => "centralized",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "federated" => Ok(Mode::Federated),
            "centralized" => Ok(Mode::Centralized),
            _ => Err("expected `federated` or `centralized`".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyConfig {
    /// `None` disables noise, clipping and accounting.
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub clip: f64,
    /// Sampling rate fed to the accountant.
    pub sample_rate: f64,
    pub noise_every_local_step: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub batch: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    /// Centralized epochs.
    pub epochs: usize,
    pub client_fraction: f64,
    pub weighted_fedavg: bool,
}

/// Where windows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic,
    Mex(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub window_secs: f64,
    pub stride_secs: f64,
    pub dct_keep: usize,
    pub train_fraction: f64,
    pub autoencoder_epochs: usize,
}

/// Synthetic generator settings. Dimensions and separation apply to every
/// enabled modality; `seed == None` follows the replicate seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub clients: usize,
    pub classes: usize,
    pub windows_per_client: usize,
    pub dim: Option<usize>,
    pub separation: f64,
    pub noise: f64,
    pub dirichlet_alpha: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestbedConfig {
    pub params: ConvergenceBoundParams,
    pub clients: usize,
    pub rounds: usize,
    pub replicates: usize,
}

/// One fully resolved experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: ModelKind,
    pub modalities: Vec<Modality>,
    pub privacy: PrivacyConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub graph: GraphOptions,
    pub f1: F1Average,
    pub seed: u64,
    pub replicates: usize,
    pub output: PathBuf,
    /// Write parameters every this many rounds (epochs when centralized); 0 disables.
    pub checkpoint_every: usize,
    pub testbed: TestbedConfig,
}

impl ExperimentConfig {
    /// Synthetic spec for the replicate seeded with `seed`.
    pub fn synthetic_spec(&self, seed: u64) -> SyntheticSpec {
        let s = &self.synthetic;
        SyntheticSpec {
            clients: s.clients,
            classes: s.classes,
            windows_per_client: s.windows_per_client,
            modalities: self
                .modalities
                .iter()
                .map(|&m| (m, s.dim.unwrap_or(m.feature_dim()), s.separation))
                .collect(),
            noise: s.noise,
            dirichlet_alpha: s.dirichlet_alpha,
            seed: s.seed.unwrap_or(seed),
        }
    }

    /// Effective configuration in the input format; parsing it back gives
    /// an equal config.
    pub fn echo(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| writeln!(o, "{k} = {v}").expect("string write");
        let f = |x: f64| format!("{x:?}");
        kv("mode", self.mode.name().into());
        kv("model", self.model.name().into());
        kv(
            "modalities",
            self.modalities
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("seed", self.seed.to_string());
        kv("replicates", self.replicates.to_string());
        kv("output.dir", self.output.display().to_string());
        kv("output.checkpoint_every", self.checkpoint_every.to_string());
        kv("eval.f1", self.f1.name().into());
        let p = &self.privacy;
        kv("privacy.epsilon", p.epsilon.map_or("none".into(), f));
        kv("privacy.delta", f(p.delta));
        kv("privacy.clip", f(p.clip));
        kv("privacy.q", f(p.sample_rate));
        kv(
            "privacy.noise_every_local_step",
            p.noise_every_local_step.to_string(),
        );
        let t = &self.training;
        kv("training.optimizer", t.optimizer.name().into());
        kv("training.lr", f(t.lr));
        kv("training.layers", t.layers.to_string());
        kv("training.hidden", t.hidden.to_string());
        kv("training.dropout", f(t.dropout));
        kv("training.batch", t.batch.to_string());
        kv("training.local_epochs", t.local_epochs.to_string());
        kv("training.rounds", t.rounds.to_string());
        kv("training.epochs", t.epochs.to_string());
        kv("training.client_fraction", f(t.client_fraction));
        kv("training.weighted_fedavg", t.weighted_fedavg.to_string());
        let d = &self.data;
        match &d.source {
            DataSource::Synthetic => kv("data.source", "synthetic".into()),
            DataSource::Mex(path) => {
                kv("data.source", "mex".into());
                kv("data.path", path.display().to_string());
            }
        }
        kv("data.window_secs", f(d.window_secs));
        kv("data.stride_secs", f(d.stride_secs));
        kv("data.dct_keep", d.dct_keep.to_string());
        kv("data.train_fraction", f(d.train_fraction));
        kv("data.autoencoder_epochs", d.autoencoder_epochs.to_string());
        let s = &self.synthetic;
        kv("synthetic.clients", s.clients.to_string());
        kv("synthetic.classes", s.classes.to_string());
        kv(
            "synthetic.windows_per_client",
            s.windows_per_client.to_string(),
        );
        kv(
            "synthetic.dim",
            s.dim.map_or("auto".into(), |v| v.to_string()),
        );
        kv("synthetic.separation", f(s.separation));
        kv("synthetic.noise", f(s.noise));
        kv("synthetic.dirichlet_alpha", f(s.dirichlet_alpha));
        kv(
            "synthetic.seed",
            s.seed.map_or("replicate".into(), |v| v.to_string()),
        );
        kv("graph.percentile", f(self.graph.percentile));
        kv("graph.modality_specific", (!self.graph.shared).to_string());
        let tb = &self.testbed;
        let bp = &tb.params;
        kv("testbed.mu", f(bp.mu));
        kv("testbed.smoothness", f(bp.smoothness));
        kv("testbed.grad_bound", f(bp.grad_bound));
        kv("testbed.zeta", f(bp.zeta));
        kv("testbed.sigma_g", f(bp.sigma_g));
        kv("testbed.dim", bp.dim.to_string());
        kv("testbed.sampled", bp.sampled.to_string());
        kv("testbed.batch", bp.batch.to_string());
        kv("testbed.clip", f(bp.clip));
        kv("testbed.sigma", f(bp.sigma));
        kv("testbed.eta", f(bp.eta));
        kv("testbed.clients", tb.clients.to_string());
        kv("testbed.rounds", tb.rounds.to_string());
        kv("testbed.replicates", tb.replicates.to_string());
        o
    }
}

/// Raw `key = value` pairs, plus the sweep axes in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub values: BTreeMap<String, String>,
    pub sweeps: Vec<(String, Vec<String>)>,
}

impl RawConfig {
    pub fn parse(text: &str, file: &Path) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    file: file.to_path_buf(),
                    line: n + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse {
                    file: file.to_path_buf(),
                    line: n + 1,
                    message: "empty key".into(),
                });
            }
            if let Some(target) = k.strip_prefix("sweep.") {
                if raw.sweeps.iter().any(|(t, _)| t == target) {
                    return Err(Error::config(k, "duplicate sweep axis"));
                }
                let vals: Vec<String> = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if vals.is_empty() {
                    return Err(Error::config(k, "sweep needs at least one value"));
                }
                raw.sweeps.push((target.to_string(), vals));
            } else if raw.values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(k, "key given twice"));
            }
        }
        Ok(raw)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Cartesian product of the sweep axes; the last axis varies fastest.
    /// Each cell lists its `(key, value)` overrides.
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut cells = vec![Vec::new()];
        for (key, vals) in &self.sweeps {
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    vals.iter().map(move |v| {
                        let mut c: Vec<(String, String)> = cell.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }

    pub fn with_overrides(&self, overrides: &[(String, String)]) -> RawConfig {
        let mut values = self.values.clone();
        for (k, v) in overrides {
            values.insert(k.clone(), v.clone());
        }
        RawConfig {
            values,
            sweeps: Vec::new(),
        }
    }
}

struct Fields {
    values: BTreeMap<String, String>,
}

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take_opt(key)?.unwrap_or(default))
    }

    fn take_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    /// Value that may also be the literal `word`, which maps to `None`.
    fn take_or_word<T: FromStr>(
        &mut self,
        key: &str,
        word: &str,
        default: Option<T>,
    ) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key).map(String::as_str) {
            Some(v) if v == word => {
                self.values.remove(key);
                Ok(None)
            }
            Some(_) => self.take_opt(key),
            None => Ok(default),
        }
    }
}

fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err("expected `adam` or `sgd`".into()),
    }
}

fn parse_modalities(s: &str) -> Result<Vec<Modality>> {
    let mut out: Vec<Modality> = Vec::new();
    for part in s.split(',') {
        let m = part
            .parse::<Modality>()
            .map_err(|e| Error::config("modalities", e.to_string()))?;
        if out.contains(&m) {
            return Err(Error::config("modalities", format!("`{m}` listed twice")));
        }
        out.push(m);
    }
    Ok(out)
}

/// Resolves raw values into a validated config, filling defaults. Mode
/// dependent defaults (learning rate, hidden width) follow `mode`.
pub fn resolve(raw: &RawConfig) -> Result<ExperimentConfig> {
    if !raw.sweeps.is_empty() {
        return Err(Error::config(
            format!("sweep.{}", raw.sweeps[0].0),
            "expand sweeps before resolving",
        ));
    }
    let mut f = Fields {
        values: raw.values.clone(),
    };
    let mode: Mode = f.take("mode", Mode::Federated)?;
    let model: ModelKind = f.take("model", ModelKind::Gcn)?;
    let modalities = match f.values.remove("modalities") {
        Some(v) => parse_modalities(&v)?,
        None => Modality::ALL.to_vec(),
    };
    let seed: u64 = f.take("seed", 0)?;
    let replicates: usize = f.take("replicates", 1)?;
    let output: PathBuf = f.take("output.dir", PathBuf::from("out"))?;
    let checkpoint_every: usize = f.take("output.checkpoint_every", 0)?;
    let f1: F1Average = f.take("eval.f1", F1Average::Macro)?;

    let privacy = PrivacyConfig {
        epsilon: f.take_or_word("privacy.epsilon", "none", None)?,
        delta: f.take("privacy.delta", 1e-3)?,
        clip: f.take("privacy.clip", 1.0)?,
        sample_rate: f.take("privacy.q", 0.01)?,
        noise_every_local_step: f.take("privacy.noise_every_local_step", false)?,
    };

    let central = mode == Mode::Centralized;
    let optimizer = match f.values.remove("training.optimizer") {
        Some(v) => parse_optimizer(&v).map_err(|e| Error::config("training.optimizer", e))?,
        None => OptimizerKind::Adam,
    };
    let training = TrainingConfig {
        optimizer,
        lr: f.take("training.lr", if central { 0.001 } else { 0.01 })?,
        layers: f.take("training.layers", 2)?,
        hidden: f.take("training.hidden", if central { 128 } else { 64 })?,
        dropout: f.take("training.dropout", 0.5)?,
        batch: f.take("training.batch", 32)?,
        local_epochs: f.take("training.local_epochs", 20)?,
        rounds: f.take("training.rounds", 50)?,
        epochs: f.take("training.epochs", 500)?,
        client_fraction: f.take("training.client_fraction", 1.0)?,
        weighted_fedavg: f.take("training.weighted_fedavg", false)?,
    };

    let source: String = f.take("data.source", "synthetic".to_string())?;
    let source = match source.as_str() {
        "synthetic" => DataSource::Synthetic,
        "mex" => match f.take_opt::<PathBuf>("data.path")? {
            Some(p) => DataSource::Mex(p),
            None => {
                return Err(Error::config(
                    "data.path",
                    "required when data.source = mex",
                ))
            }
        },
        other => {
            return Err(Error::config(
                "data.source",
                format!("unknown source `{other}`"),
            ))
        }
    };
    let data = DataConfig {
        source,
        window_secs: f.take("data.window_secs", 5.0)?,
        stride_secs: f.take("data.stride_secs", 2.0)?,
        dct_keep: f.take("data.dct_keep", 60)?,
        train_fraction: f.take("data.train_fraction", 0.7)?,
        autoencoder_epochs: f.take("data.autoencoder_epochs", 50)?,
    };

    let synthetic = SyntheticConfig {
        clients: f.take("synthetic.clients", 5)?,
        classes: f.take("synthetic.classes", 7)?,
        windows_per_client: f.take("synthetic.windows_per_client", 140)?,
        dim: f.take_or_word("synthetic.dim", "auto", None)?,
        separation: f.take("synthetic.separation", 3.0)?,
        noise: f.take("synthetic.noise", 1.0)?,
        dirichlet_alpha: f.take("synthetic.dirichlet_alpha", 0.5)?,
        seed: f.take_or_word("synthetic.seed", "replicate", None)?,
    };

    let graph = GraphOptions {
        percentile: f.take("graph.percentile", crate::graph::DEFAULT_PERCENTILE)?,
        shared: !f.take("graph.modality_specific", true)?,
    };

    let d = ConvergenceBoundParams::default();
    let testbed = TestbedConfig {
        params: ConvergenceBoundParams {
            mu: f.take("testbed.mu", d.mu)?,
            smoothness: f.take("testbed.smoothness", d.smoothness)?,
            grad_bound: f.take("testbed.grad_bound", d.grad_bound)?,
            zeta: f.take("testbed.zeta", d.zeta)?,
            sigma_g: f.take("testbed.sigma_g", d.sigma_g)?,
            dim: f.take("testbed.dim", d.dim)?,
            sampled: f.take("testbed.sampled", d.sampled)?,
            batch: f.take("testbed.batch", d.batch)?,
            clip: f.take("testbed.clip", d.clip)?,
            sigma: f.take("testbed.sigma", d.sigma)?,
            eta: f.take("testbed.eta", d.eta)?,
        },
        clients: f.take("testbed.clients", 10)?,
        rounds: f.take("testbed.rounds", 200)?,
        replicates: f.take("testbed.replicates", 20)?,
    };

    if let Some(key) = f.values.keys().next() {
        return Err(Error::config(key.as_str(), "unknown key"));
    }

    let cfg = ExperimentConfig {
        mode,
        model,
        modalities,
        privacy,
        training,
        data,
        synthetic,
        graph,
        f1,
        seed,
        replicates,
        output,
        checkpoint_every,
        testbed,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(c: &ExperimentConfig) -> Result<()> {
    check(
        !c.modalities.is_empty(),
        "modalities",
        "at least one modality required",
    )?;
    check(c.replicates >= 1, "replicates", "must be at least 1")?;
    let p = &c.privacy;
    if let Some(e) = p.epsilon {
        check(
            e > 0.0 && e.is_finite(),
            "privacy.epsilon",
            "must be positive and finite, or `none`",
        )?;
    }
    check(
        p.delta > 0.0 && p.delta < 1.0,
        "privacy.delta",
        "must lie in (0, 1)",
    )?;
    check(p.clip > 0.0, "privacy.clip", "must be positive")?;
    check(
        p.sample_rate > 0.0 && p.sample_rate <= 1.0,
        "privacy.q",
        "must lie in (0, 1]",
    )?;
    let t = &c.training;
    check(
        t.lr > 0.0 && t.lr.is_finite(),
        "training.lr",
        "must be positive",
    )?;
    check(t.layers >= 1, "training.layers", "must be at least 1")?;
    check(t.hidden >= 1, "training.hidden", "must be at least 1")?;
    check(
        (0.0..1.0).contains(&t.dropout),
        "training.dropout",
        "must lie in [0, 1)",
    )?;
    check(t.batch >= 1, "training.batch", "must be at least 1")?;
    check(t.rounds >= 1, "training.rounds", "must be at least 1")?;
    check(t.epochs >= 1, "training.epochs", "must be at least 1")?;
    check(
        t.client_fraction > 0.0 && t.client_fraction <= 1.0,
        "training.client_fraction",
        "must lie in (0, 1]",
    )?;
    let d = &c.data;
    check(d.window_secs > 0.0, "data.window_secs", "must be positive")?;
    check(d.stride_secs > 0.0, "data.stride_secs", "must be positive")?;
    check(d.dct_keep >= 1, "data.dct_keep", "must be at least 1")?;
    check(
        d.train_fraction > 0.0 && d.train_fraction < 1.0,
        "data.train_fraction",
        "must lie in (0, 1)",
    )?;
    let s = &c.synthetic;
    check(s.clients >= 1, "synthetic.clients", "must be at least 1")?;
    check(s.classes >= 2, "synthetic.classes", "must be at least 2")?;
    check(
        s.windows_per_client >= s.classes,
        "synthetic.windows_per_client",
        "must be at least the class count",
    )?;
    check(s.dim != Some(0), "synthetic.dim", "must be positive")?;
    check(
        s.separation >= 0.0,
        "synthetic.separation",
        "must be non-negative",
    )?;
    check(s.noise >= 0.0, "synthetic.noise", "must be non-negative")?;
    check(
        s.dirichlet_alpha > 0.0,
        "synthetic.dirichlet_alpha",
        "must be positive",
    )?;
    check(
        (0.0..=100.0).contains(&c.graph.percentile),
        "graph.percentile",
        "must lie in [0, 100]",
    )?;
    let tb = &c.testbed;
    check(tb.clients >= 1, "testbed.clients", "must be at least 1")?;
    check(
        tb.replicates >= 1,
        "testbed.replicates",
        "must be at least 1",
    )?;
    check(
        tb.clients >= tb.params.sampled,
        "testbed.sampled",
        "cannot exceed testbed.clients",
    )?;
    tb.params
        .validate()
        .map_err(|e| Error::config("testbed", e.to_string()))
}

/// Reads and resolves a config without sweeps.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    resolve(&RawConfig::read(path)?)
}
