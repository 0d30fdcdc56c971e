use std::fs;
use std::path::{Path, PathBuf};

use super::Modality;
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// One (subject, exercise, repetition, modality) recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub client: String,
    /// Class index, 0-based.
    pub exercise: usize,
    pub repetition: u32,
    pub modality: Modality,
    /// Samples per second, estimated from timestamps when loaded.
    pub sample_rate: f64,
    /// F × frame-width values.
    pub frames: Tensor2,
    /// Microseconds since the Unix epoch, strictly increasing.
    pub timestamps: Vec<i64>,
}

impl RawRecording {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => (b - a) as f64 * 1e-6,
            _ => 0.0,
        }
    }

    /// Frames whose timestamps fall inside `[start_us, end_us]`.
    pub fn trimmed(&self, start_us: i64, end_us: i64) -> Result<RawRecording> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.timestamps[i] >= start_us && self.timestamps[i] <= end_us)
            .collect();
        Ok(RawRecording {
            frames: self.frames.gather_rows(&idx)?,
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            ..self.clone()
        })
    }
}

fn parse_timestamp(field: &str) -> Option<i64> {
    let field = field.trim();
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    // decimal seconds
    let secs: f64 = field.parse().ok()?;
    secs.is_finite().then(|| (secs * 1e6).round() as i64)
}

fn parse_file_name(path: &Path) -> Option<(usize, u32)> {
    let stem = path.file_stem()?.to_str()?;
    let (ex, rep) = stem.split_once('_')?;
    Some((ex.parse().ok()?, rep.parse().ok()?))
}

fn read_recording(path: &Path, client: &str, modality: Modality) -> Result<RawRecording> {
    let (exercise_id, repetition) = parse_file_name(path).ok_or_else(|| Error::Schema {
        file: path.to_path_buf(),
        message: "file name must be <exercise_id>_<repetition>.csv".into(),
    })?;
    if exercise_id == 0 {
        return Err(Error::Schema {
            file: path.to_path_buf(),
            message: "exercise ids are 1-based".into(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let width = modality.frame_width();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let first = fields.next().unwrap_or("");
        let Some(ts) = parse_timestamp(first) else {
            if lineno == 0 {
                continue; // header
            }
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line: lineno + 1,
                message: format!("bad timestamp `{first}`"),
            });
        };
        let row: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                file: path.to_path_buf(),
                line: lineno + 1,
                message: format!("bad value: {e}"),
            })?;
        if row.len() != width {
            return Err(Error::Schema {
                file: path.to_path_buf(),
                message: format!(
                    "line {} has {} channels, {} frames have {width}",
                    lineno + 1,
                    row.len(),
                    modality
                ),
            });
        }
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(Error::Parse {
                    file: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("timestamp {ts} does not increase past {prev}"),
                });
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                file: path.to_path_buf(),
                line: lineno + 1,
                message: "non-finite value".into(),
            });
        }
        timestamps.push(ts);
        values.extend(row);
    }
    let sample_rate = if timestamps.len() >= 2 {
        (timestamps.len() - 1) as f64
            / ((timestamps[timestamps.len() - 1] - timestamps[0]) as f64 * 1e-6)
    } else {
        modality.target_rate()
    };
    Ok(RawRecording {
        client: client.to_string(),
        exercise: exercise_id - 1,
        repetition,
        modality,
        sample_rate,
        frames: Tensor2::from_vec(timestamps.len(), width, values)?,
        timestamps,
    })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads every recording under `<root>/<modality>/<subject>/<exercise>_<rep>.csv`.
///
/// Directories for unknown modalities are ignored. Results are ordered by
/// modality, subject, then file name.
pub fn load_mex_layout(root: impl AsRef<Path>) -> Result<Vec<RawRecording>> {
    let root = root.as_ref();
    let mut out = Vec::new();
    for modality in Modality::ALL {
        let mdir = root.join(modality.name());
        if !mdir.is_dir() {
            continue;
        }
        for subject_dir in sorted_entries(&mdir)? {
            if !subject_dir.is_dir() {
                continue;
            }
            let subject = subject_dir
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            for file in sorted_entries(&subject_dir)? {
                if file.extension().and_then(|e| e.to_str()) != Some("csv") {
                    continue;
                }
                out.push(read_recording(&file, &subject, modality)?);
            }
        }
    }
    Ok(out)
}

/// Linearly interpolates `rec` onto a uniform `target_hz` grid starting at its
/// first timestamp and not extending past its last.
pub fn resample(rec: &RawRecording, target_hz: f64) -> Result<RawRecording> {
    if rec.len() < 2 {
        return Err(Error::param(format!(
            "resampling needs >= 2 frames, got {}",
            rec.len()
        )));
    }
    if !(target_hz > 0.0) {
        return Err(Error::param(format!(
            "target rate {target_hz} must be positive"
        )));
    }
    let t0 = rec.timestamps[0];
    let rel: Vec<f64> = rec.timestamps.iter().map(|&t| (t - t0) as f64).collect();
    let span = *rel.last().unwrap();
    let step = 1e6 / target_hz;
    // tolerate rounding so an exact multiple of the step keeps its last sample
    let count = (span / step + 1e-9).floor() as usize + 1;
    let width = rec.frames.cols();
    let mut frames = Tensor2::zeros(count, width);
    let mut timestamps = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let t = k as f64 * step;
        while seg + 2 < rel.len() && rel[seg + 1] < t {
            seg += 1;
        }
        let (ta, tb) = (rel[seg], rel[seg + 1]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        let (ra, rb) = (rec.frames.row(seg), rec.frames.row(seg + 1));
        for (c, out) in frames.row_mut(k).iter_mut().enumerate() {
            *out = ra[c] + w * (rb[c] - ra[c]);
        }
        timestamps.push(t0 + t.round() as i64);
    }
    Ok(RawRecording {
        sample_rate: target_hz,
        frames,
        timestamps,
        ..rec.clone()
    })
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Statistics over the rows of every matrix in `blocks`.
    pub fn from_frames<'a>(blocks: impl IntoIterator<Item = &'a Tensor2>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let blocks: Vec<&Tensor2> = blocks.into_iter().collect();
        for b in &blocks {
            if sum.is_empty() {
                sum = vec![0.0; b.cols()];
            }
            if b.cols() != sum.len() {
                return Err(Error::shape("channel stats", (0, sum.len()), b.shape()));
            }
            for r in 0..b.rows() {
                for (s, v) in sum.iter_mut().zip(b.row(r)) {
                    *s += v;
                }
            }
            count += b.rows();
        }
        if count == 0 {
            return Err(Error::param("channel statistics over zero frames"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        sq.resize(mean.len(), 0.0);
        for b in &blocks {
            for r in 0..b.rows() {
                for ((s, v), m) in sq.iter_mut().zip(b.row(r)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    /// `(x - mean) / std` per channel; constant channels map to 0.
    pub fn apply(&self, frames: &Tensor2) -> Result<Tensor2> {
        if frames.cols() != self.mean.len() {
            return Err(Error::shape("zscore", frames.shape(), (1, self.mean.len())));
        }
        let mut out = frames.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s > 0.0 { (*v - m) / s } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// Applies train-split channel statistics to a recording.
pub fn zscore_normalize(rec: &RawRecording, stats: &ChannelStats) -> Result<RawRecording> {
    Ok(RawRecording {
        frames: stats.apply(&rec.frames)?,
        ..rec.clone()
    })
}

/// A contiguous block of frames cut from one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBlock {
    pub frames: Tensor2,
    pub label: usize,
    pub start_frame: usize,
}

/// Cuts sliding windows of `window_secs` every `stride_secs`.
///
/// With F frames, W = window·rate and S = stride·rate the result has
/// `floor((F − W)/S) + 1` blocks, or none when F < W.
pub fn segment_windows(
    rec: &RawRecording,
    window_secs: f64,
    stride_secs: f64,
) -> Result<Vec<FrameBlock>> {
    if !(stride_secs > 0.0) || window_secs < stride_secs {
        return Err(Error::param(format!(
            "need window ({window_secs}s) >= stride ({stride_secs}s) > 0"
        )));
    }
    let w = (window_secs * rec.sample_rate).round() as usize;
    let s = (stride_secs * rec.sample_rate).round() as usize;
    if w == 0 || s == 0 {
        return Err(Error::param("window or stride shorter than one frame"));
    }
    let f = rec.len();
    if f < w {
        return Ok(Vec::new());
    }
    (0..=(f - w) / s)
        .map(|i| {
            let start = i * s;
            let idx: Vec<usize> = (start..start + w).collect();
            Ok(FrameBlock {
                frames: rec.frames.gather_rows(&idx)?,
                label: rec.exercise,
                start_frame: start,
            })
        })
        .collect()
}
