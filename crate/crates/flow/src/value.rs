//! Values that travel along edges, plus plot frames and decisions.

use serde::{Deserialize, Serialize};

use noetic_core::classify::ClassifierModel;
use noetic_core::features::FeatureMatrix;
use noetic_core::signal::{ChannelInfo, EpochSet, Marker};
use noetic_core::sim::SimEvent;

use crate::catalog::PortType;

/// Maximum points per plotted series.
pub const MAX_PLOT_POINTS: usize = 2048;

/// Stream metadata fixed by the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub fs: f64,
    pub channels: Vec<ChannelInfo>,
    pub start_time: f64,
    #[serde(default)]
    pub subject_tag: String,
}

/// A contiguous run of samples (possibly empty) plus markers that arrived
/// with it.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamChunk {
    pub info: StreamInfo,
    /// Absolute index of the first sample since stream start.
    pub start_index: u64,
    /// Channel-major samples.
    pub samples: Vec<Vec<f64>>,
    pub markers: Vec<Marker>,
}

impl StreamChunk {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t0(&self) -> f64 {
        self.info.start_time + self.start_index as f64 / self.info.fs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub matrix: FeatureMatrix,
    /// Epoch end relative to its marker, used to time decisions.
    pub post_s: f64,
}

/// Power spectra for a batch of segments (one per epoch or stream chunk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBatch {
    pub freqs: Vec<f64>,
    pub channels: Vec<String>,
    /// `segments[s][channel][bin]`.
    pub segments: Vec<Vec<Vec<f64>>>,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub node: String,
    /// Marker time of the classified epoch.
    pub marker_t: f64,
    /// Time at which the epoch was complete.
    pub t: f64,
    pub class_id: u32,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_class: Option<u32>,
    /// `t0` of the source frame that completed the epoch.
    pub source_t0: f64,
}

impl Decision {
    /// Fields that must agree between offline and online runs.
    pub fn epoch_level(&self) -> (u64, u32, Vec<u64>) {
        (self.marker_t.to_bits(), self.class_id, self.scores.iter().map(|s| s.to_bits()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Decision(Decision),
    Sim { node: String, source_t0: f64, event: SimEvent },
}

impl Event {
    pub fn source_t0(&self) -> f64 {
        match self {
            Event::Decision(d) => d.source_t0,
            Event::Sim { source_t0, .. } => *source_t0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Raw(StreamChunk),
    Epochs(EpochSet),
    Features(FeatureBatch),
    Labels(Vec<u32>),
    Model(Box<ClassifierModel>),
    Spectrum(SpectrumBatch),
    Events(Vec<Event>),
}

impl Value {
    pub fn port_type(&self) -> PortType {
        match self {
            Value::Raw(_) => PortType::RawStream,
            Value::Epochs(_) => PortType::Epochs,
            Value::Features(_) => PortType::Features,
            Value::Labels(_) => PortType::Labels,
            Value::Model(_) => PortType::Model,
            Value::Spectrum(_) => PortType::Spectrum,
            Value::Events(_) => PortType::Events,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Raw,
    Filtered,
    Ic,
    Fft,
    Periodogram,
    Decision,
}

impl PlotKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "raw" => Self::Raw,
            "filtered" => Self::Filtered,
            "ic" => Self::Ic,
            "fft" => Self::Fft,
            "periodogram" => Self::Periodogram,
            "decision" => Self::Decision,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlotPayload {
    /// Time series: `data[channel][k]` sampled every `dt` from `t0`.
    Series { channels: Vec<String>, t0: f64, dt: f64, data: Vec<Vec<f64>> },
    Spectrum { channels: Vec<String>, freqs: Vec<f64>, power: Vec<Vec<f64>> },
    Decision { class_id: u32, scores: Vec<f64> },
    Sim { event: SimEvent },
}

impl PlotPayload {
    pub fn max_points(&self) -> usize {
        match self {
            PlotPayload::Series { data, .. } => data.iter().map(Vec::len).max().unwrap_or(0),
            PlotPayload::Spectrum { power, .. } => power.iter().map(Vec::len).max().unwrap_or(0),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotFrame {
    pub session: String,
    pub node: String,
    pub kind: PlotKind,
    /// Per-node sequence number, starting at 0.
    pub seq: u64,
    pub t: f64,
    pub source_t0: f64,
    pub payload: PlotPayload,
}

/// Keeps every `k`-th point so that at most `max` remain.
pub fn decimate(x: &[f64], max: usize) -> (Vec<f64>, usize) {
    let stride = x.len().div_ceil(max.max(1)).max(1);
    (x.iter().step_by(stride).copied().collect(), stride)
}
