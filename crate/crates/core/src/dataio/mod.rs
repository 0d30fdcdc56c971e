//! Ingestion and feature encoding.
//!
//! Raw MEx-layout recordings go through resampling, cross-modality alignment,
//! windowing, train-split z-scoring and per-modality encoding (DCT for the
//! accelerometers, a small autoencoder for the depth camera and pressure
//! mat). The synthetic generator produces the same [`WindowSet`] shape
//! directly, or writes raw recordings in the MEx layout.

mod encode;
mod pipeline;
mod recording;
mod split;
mod synthetic;

use std::fmt;
use std::str::FromStr;

pub use encode::{encode_accel, train_autoencoder, AutoencoderConfig, AutoencoderFit, Encoder};
pub use pipeline::{prepare_mex, PipelineConfig, PreparedClient};
pub use recording::{
    load_mex_layout, resample, segment_windows, zscore_normalize, ChannelStats, FrameBlock,
    RawRecording,
};
pub use split::{split_indices, split_train_test};
pub use synthetic::{class_counts, generate_synthetic, write_synthetic_mex, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// One sensor stream type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    /// Thigh accelerometer.
    Act,
    /// Wrist accelerometer.
    Acw,
    /// Depth camera, 12×16 frames.
    Dc,
    /// Pressure mat, 32×16 frames.
    Pm,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Act, Modality::Acw, Modality::Dc, Modality::Pm];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Act => "act",
            Modality::Acw => "acw",
            Modality::Dc => "dc",
            Modality::Pm => "pm",
        }
    }

    /// Values per raw frame.
    pub fn frame_width(self) -> usize {
        match self {
            Modality::Act | Modality::Acw => 3,
            Modality::Dc => 12 * 16,
            Modality::Pm => 32 * 16,
        }
    }

    /// Rate every recording of this modality is resampled to, in Hz.
    pub fn target_rate(self) -> f64 {
        match self {
            Modality::Act | Modality::Acw => 100.0,
            Modality::Dc | Modality::Pm => 15.0,
        }
    }

    /// Width of the encoded per-window feature vector.
    pub fn feature_dim(self) -> usize {
        match self {
            Modality::Act | Modality::Acw => 180,
            Modality::Dc | Modality::Pm => 64,
        }
    }

    pub fn is_accelerometer(self) -> bool {
        matches!(self, Modality::Act | Modality::Acw)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "act" => Ok(Modality::Act),
            "acw" => Ok(Modality::Acw),
            "dc" => Ok(Modality::Dc),
            "pm" => Ok(Modality::Pm),
            other => Err(Error::param(format!("unknown modality `{other}`"))),
        }
    }
}

/// Encoded windows of one client. Row `i` of every feature matrix describes
/// the same wall-clock span.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub client: String,
    pub modalities: Vec<Modality>,
    /// One N×d matrix per entry of `modalities`.
    pub features: Vec<Tensor2>,
    pub labels: Vec<usize>,
    /// Recording each window came from; windows of a recording are contiguous
    /// and in time order.
    pub recording: Vec<usize>,
    /// Position of the window within its recording.
    pub window_index: Vec<usize>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features_for(&self, m: Modality) -> Option<&Tensor2> {
        self.modalities
            .iter()
            .position(|&x| x == m)
            .map(|i| &self.features[i])
    }

    /// Maximal runs of consecutive windows sharing a recording.
    pub fn recording_runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=self.recording.len() {
            if i == self.recording.len() || self.recording[i] != self.recording[start] {
                runs.push(start..i);
                start = i;
            }
        }
        runs
    }

    /// Windows at `idx`, in that order. Recording ids are kept.
    pub fn subset(&self, idx: &[usize]) -> Result<WindowSet> {
        let features = self
            .features
            .iter()
            .map(|f| f.gather_rows(idx))
            .collect::<Result<Vec<_>>>()?;
        Ok(WindowSet {
            client: self.client.clone(),
            modalities: self.modalities.clone(),
            features,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            recording: idx.iter().map(|&i| self.recording[i]).collect(),
            window_index: idx.iter().map(|&i| self.window_index[i]).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.features.len() != self.modalities.len() {
            return Err(Error::param("one feature matrix per modality required"));
        }
        for (m, f) in self.modalities.iter().zip(&self.features) {
            if f.rows() != n {
                return Err(Error::shape("window features", (n, 0), f.shape()));
            }
            if !f.is_finite() {
                return Err(Error::param(format!("non-finite {m} features")));
            }
        }
        if self.recording.len() != n || self.window_index.len() != n {
            return Err(Error::param(
                "recording bookkeeping does not match window count",
            ));
        }
        Ok(())
    }
}
