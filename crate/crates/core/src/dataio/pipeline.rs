use std::collections::BTreeMap;

use super::encode::{encode_accel, mean_pool, train_autoencoder_rows, AutoencoderConfig, Encoder};
use super::recording::{resample, segment_windows, ChannelStats, FrameBlock, RawRecording};
use super::split::split_indices;
use super::{Modality, WindowSet};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;
use crate::rng::derive_seed;

/// Settings for turning raw recordings into encoded windows.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub modalities: Vec<Modality>,
    pub window_secs: f64,
    pub stride_secs: f64,
    pub dct_keep: usize,
    pub train_fraction: f64,
    pub autoencoder: AutoencoderConfig,
    pub autoencoder_epochs: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            modalities: Modality::ALL.to_vec(),
            window_secs: 5.0,
            stride_secs: 2.0,
            dct_keep: 60,
            train_fraction: 0.7,
            autoencoder: AutoencoderConfig::default(),
            autoencoder_epochs: 50,
            seed: 0,
        }
    }
}

/// Encoded windows of one client together with its train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedClient {
    pub windows: WindowSet,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl PreparedClient {
    /// Splits an already encoded window set.
    pub fn split(windows: WindowSet, fraction: f64, seed: u64) -> Result<Self> {
        let (train, test) = split_indices(&windows.labels, fraction, seed)?;
        Ok(Self {
            windows,
            train,
            test,
        })
    }
}

/// Raw windows of one client, one block list per configured modality.
struct RawClient {
    name: String,
    blocks: Vec<Vec<FrameBlock>>,
    labels: Vec<usize>,
    recording: Vec<usize>,
    window_index: Vec<usize>,
}

type GroupKey = (usize, u32);

/// Resamples, aligns to the common time span, segments and pairs windows
/// by index across modalities.
fn segment_group(
    recs: &BTreeMap<Modality, &RawRecording>,
    cfg: &PipelineConfig,
) -> Result<Vec<Vec<FrameBlock>>> {
    let resampled: Vec<RawRecording> = cfg
        .modalities
        .iter()
        .map(|m| resample(recs[m], m.target_rate()))
        .collect::<Result<_>>()?;
    let start = resampled
        .iter()
        .map(|r| r.timestamps[0])
        .max()
        .expect("modalities");
    let end = resampled
        .iter()
        .map(|r| *r.timestamps.last().unwrap())
        .min()
        .expect("modalities");
    if end <= start {
        return Ok(vec![Vec::new(); cfg.modalities.len()]);
    }
    let mut per_modality = Vec::new();
    for r in &resampled {
        let trimmed = r.trimmed(start, end)?;
        per_modality.push(segment_windows(&trimmed, cfg.window_secs, cfg.stride_secs)?);
    }
    let count = per_modality.iter().map(Vec::len).min().unwrap_or(0);
    per_modality.iter_mut().for_each(|b| b.truncate(count));
    Ok(per_modality)
}

fn collect_clients(recordings: &[RawRecording], cfg: &PipelineConfig) -> Result<Vec<RawClient>> {
    let mut grouped: BTreeMap<&str, BTreeMap<GroupKey, BTreeMap<Modality, &RawRecording>>> =
        BTreeMap::new();
    for r in recordings {
        if !cfg.modalities.contains(&r.modality) {
            continue;
        }
        let slot = grouped
            .entry(r.client.as_str())
            .or_default()
            .entry((r.exercise, r.repetition))
            .or_default();
        if slot.insert(r.modality, r).is_some() {
            return Err(Error::param(format!(
                "duplicate {} recording for {} exercise {} repetition {}",
                r.modality, r.client, r.exercise, r.repetition
            )));
        }
    }
    let mut clients = Vec::new();
    for (name, groups) in grouped {
        let mut c = RawClient {
            name: name.to_string(),
            blocks: vec![Vec::new(); cfg.modalities.len()],
            labels: Vec::new(),
            recording: Vec::new(),
            window_index: Vec::new(),
        };
        for (rec_id, ((exercise, rep), recs)) in groups.iter().enumerate() {
            if recs.len() != cfg.modalities.len() {
                log::warn!(
                    "{name}: exercise {exercise} repetition {rep} lacks a modality; skipped"
                );
                continue;
            }
            let blocks = segment_group(recs, cfg)?;
            let n = blocks[0].len();
            for (dst, src) in c.blocks.iter_mut().zip(blocks) {
                dst.extend(src);
            }
            c.labels.extend(std::iter::repeat_n(*exercise, n));
            c.recording.extend(std::iter::repeat_n(rec_id, n));
            c.window_index.extend(0..n);
        }
        if c.labels.is_empty() {
            log::warn!("{name}: no complete windows; client dropped");
            continue;
        }
        clients.push(c);
    }
    Ok(clients)
}

/// Full ingestion: pairing and windowing, per-client stratified split,
/// z-scoring with each client's train statistics, then DCT (accelerometers)
/// or a per-modality autoencoder fitted on all clients' train windows.
pub fn prepare_mex(
    recordings: &[RawRecording],
    cfg: &PipelineConfig,
) -> Result<Vec<PreparedClient>> {
    if cfg.modalities.is_empty() {
        return Err(Error::param("no modalities selected"));
    }
    let mut clients = collect_clients(recordings, cfg)?;
    let mut splits = Vec::new();
    for (ci, c) in clients.iter_mut().enumerate() {
        let (train, test) = split_indices(
            &c.labels,
            cfg.train_fraction,
            derive_seed(cfg.seed, &[0x5b, ci as u64]),
        )?;
        for blocks in c.blocks.iter_mut() {
            let stats = ChannelStats::from_frames(train.iter().map(|&i| &blocks[i].frames))?;
            for b in blocks.iter_mut() {
                b.frames = stats.apply(&b.frames)?;
            }
        }
        splits.push((train, test));
    }

    let mut encoders: Vec<Option<Encoder>> = Vec::new();
    for (mi, m) in cfg.modalities.iter().enumerate() {
        if m.is_accelerometer() {
            encoders.push(None);
            continue;
        }
        let pooled: Vec<Tensor2> = clients
            .iter()
            .zip(&splits)
            .flat_map(|(c, (train, _))| {
                train
                    .iter()
                    .map(move |&i| mean_pool(&c.blocks[mi][i].frames))
            })
            .collect();
        let mut data = Tensor2::zeros(pooled.len(), m.frame_width());
        for (r, p) in pooled.iter().enumerate() {
            data.row_mut(r).copy_from_slice(p.data());
        }
        let fit = train_autoencoder_rows(
            &data,
            cfg.autoencoder_epochs,
            derive_seed(cfg.seed, &[0xae, mi as u64]),
            &cfg.autoencoder,
        )?;
        log::info!(
            "{m} autoencoder: reconstruction mse {:.4} -> {:.4}",
            fit.loss_history[0],
            fit.loss_history.last().unwrap()
        );
        encoders.push(Some(fit.encoder));
    }

    let mut out = Vec::new();
    for (c, (train, test)) in clients.into_iter().zip(splits) {
        let mut features = Vec::new();
        for mi in 0..cfg.modalities.len() {
            let rows = c.blocks[mi]
                .iter()
                .map(|b| match &encoders[mi] {
                    None => encode_accel(&b.frames, cfg.dct_keep),
                    Some(e) => e.encode_block(&b.frames),
                })
                .collect::<Result<Vec<_>>>()?;
            features.push(Tensor2::from_rows(&rows)?);
        }
        let windows = WindowSet {
            client: c.name,
            modalities: cfg.modalities.clone(),
            features,
            labels: c.labels,
            recording: c.recording,
            window_index: c.window_index,
        };
        windows.validate()?;
        out.push(PreparedClient {
            windows,
            train,
            test,
        });
    }
    Ok(out)
}
