//! Signal, marker and epoch value types plus marker-locked epoching.
//!
//! Time is measured in seconds on one monotonic timebase per recording.
//! Sample `k` of a [`SignalBlock`] sits at `t0 + k / fs`. Markers carry the
//! device clock and are mapped onto the recording timebase by subtracting a
//! single scalar offset (see [`estimate_clock_offset`]).

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelRole {
    #[default]
    Eeg,
    EogReference,
    Sync,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub index: usize,
    #[serde(default)]
    pub role: ChannelRole,
}

impl ChannelInfo {
    pub fn eeg(name: impl Into<String>, index: usize) -> Self {
        Self { name: name.into(), index, role: ChannelRole::Eeg }
    }

    /// `n` EEG channels named `ch0..ch{n-1}`.
    pub fn numbered(n: usize) -> Vec<ChannelInfo> {
        (0..n).map(|i| Self::eeg(format!("ch{i}"), i)).collect()
    }
}

/// Checks name uniqueness and contiguous 0-based indices.
pub fn validate_channels(channels: &[ChannelInfo]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, ch) in channels.iter().enumerate() {
        if ch.index != i {
            return Err(Error::InvalidRecording(format!(
                "channel '{}' has index {} at position {}",
                ch.name, ch.index, i
            )));
        }
        if !seen.insert(ch.name.as_str()) {
            return Err(Error::InvalidRecording(format!("duplicate channel name '{}'", ch.name)));
        }
    }
    Ok(())
}

/// Re-indexes a channel subset so indices are contiguous again.
pub fn reindex(channels: impl IntoIterator<Item = ChannelInfo>) -> Vec<ChannelInfo> {
    channels
        .into_iter()
        .enumerate()
        .map(|(i, mut c)| {
            c.index = i;
            c
        })
        .collect()
}

/// Timestamped multichannel samples in microvolts, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    pub samples: Vec<Vec<f64>>,
    pub fs: f64,
    pub t0: f64,
    pub channels: Vec<ChannelInfo>,
}

impl SignalBlock {
    pub fn new(samples: Vec<Vec<f64>>, fs: f64, t0: f64, channels: Vec<ChannelInfo>) -> Result<Self> {
        let block = Self { samples, fs, t0, channels };
        block.validate()?;
        Ok(block)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::InvalidRecording(format!("fs must be > 0, got {}", self.fs)));
        }
        if !self.t0.is_finite() {
            return Err(Error::InvalidRecording("t0 must be finite".into()));
        }
        if self.channels.is_empty() || self.samples.len() != self.channels.len() {
            return Err(Error::InvalidRecording(format!(
                "{} sample rows for {} channels",
                self.samples.len(),
                self.channels.len()
            )));
        }
        validate_channels(&self.channels)?;
        let len = self.samples[0].len();
        if len == 0 {
            return Err(Error::InvalidRecording("recording has no samples".into()));
        }
        for (ch, row) in self.samples.iter().enumerate() {
            if row.len() != len {
                return Err(Error::InvalidRecording(format!("channel {ch} has {} samples, expected {len}", row.len())));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidRecording(format!("non-finite sample at channel {ch}, index {k}")));
            }
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    /// Sample vectors interleaved by time: `[s0c0, s0c1, .., s1c0, ..]`.
    pub fn interleaved(&self) -> Vec<f64> {
        let (n, c) = (self.len(), self.n_channels());
        let mut out = Vec::with_capacity(n * c);
        for k in 0..n {
            for row in &self.samples {
                out.push(row[k]);
            }
        }
        out
    }

    pub fn from_interleaved(data: &[f64], fs: f64, t0: f64, channels: Vec<ChannelInfo>) -> Result<Self> {
        let c = channels.len();
        if c == 0 || data.len() % c != 0 {
            return Err(Error::InvalidRecording(format!(
                "{} interleaved values do not divide into {c} channels",
                data.len()
            )));
        }
        let n = data.len() / c;
        let mut samples = vec![Vec::with_capacity(n); c];
        for frame in data.chunks_exact(c) {
            for (row, &v) in samples.iter_mut().zip(frame) {
                row.push(v);
            }
        }
        Self::new(samples, fs, t0, channels)
    }

    /// Keeps the listed channels in the given order.
    pub fn select_channels(&self, idx: &[usize]) -> Result<Self> {
        for &i in idx {
            if i >= self.n_channels() {
                return Err(invalid(format!("channel index {i} out of range ({} channels)", self.n_channels())));
            }
        }
        Ok(Self {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            fs: self.fs,
            t0: self.t0,
            channels: reindex(idx.iter().map(|&i| self.channels[i].clone())),
        })
    }

    pub fn find_channel(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub t: f64,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<u32>,
}

impl Marker {
    pub fn new(t: f64, label: impl Into<String>, class_id: Option<u32>) -> Self {
        Self { t, label: label.into(), class_id }
    }
}

/// Stable ascending sort by time.
pub fn sort_markers(markers: &mut [Marker]) {
    markers.sort_by(|a, b| a.t.total_cmp(&b.t));
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    /// channels x L
    pub data: Vec<Vec<f64>>,
    pub class_id: Option<u32>,
    pub marker_t: f64,
}

impl Epoch {
    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
    pub fs: f64,
    pub channels: Vec<ChannelInfo>,
    pub pre_s: f64,
    pub post_s: f64,
}

impl EpochSet {
    pub fn epoch_len(fs: f64, pre_s: f64, post_s: f64) -> usize {
        ((post_s - pre_s) * fs).round() as usize
    }

    pub fn expected_len(&self) -> usize {
        Self::epoch_len(self.fs, self.pre_s, self.post_s)
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Class ids of all epochs; errors if any epoch is unlabeled.
    pub fn labels(&self) -> Result<Vec<u32>> {
        self.epochs
            .iter()
            .map(|e| {
                e.class_id
                    .ok_or_else(|| invalid(format!("epoch at t={} carries no class id", e.marker_t)))
            })
            .collect()
    }

    /// Checks shared length and channel layout across epochs.
    pub fn validate(&self) -> Result<()> {
        if self.pre_s >= self.post_s {
            return Err(invalid(format!("pre_s {} must be < post_s {}", self.pre_s, self.post_s)));
        }
        let len = self.expected_len();
        for (i, e) in self.epochs.iter().enumerate() {
            if e.data.len() != self.channels.len() {
                return Err(Error::DimensionMismatch { expected: self.channels.len(), got: e.data.len() });
            }
            if e.data.iter().any(|row| row.len() != len) {
                return Err(invalid(format!("epoch {i} length differs from {len}")));
            }
        }
        Ok(())
    }

    pub fn with_epochs(&self, epochs: Vec<Epoch>) -> Self {
        Self { epochs, fs: self.fs, channels: self.channels.clone(), pre_s: self.pre_s, post_s: self.post_s }
    }
}

/// Median of `marker.t - pulse_time` over paired sync events.
pub fn estimate_clock_offset(sync_markers: &[Marker], sync_pulse_times: &[f64]) -> Result<f64> {
    if sync_markers.is_empty() || sync_pulse_times.is_empty() {
        return Err(Error::NoSyncEvents);
    }
    if sync_markers.len() != sync_pulse_times.len() {
        return Err(invalid(format!(
            "{} sync markers but {} pulses",
            sync_markers.len(),
            sync_pulse_times.len()
        )));
    }
    let mut diffs: Vec<f64> = sync_markers.iter().zip(sync_pulse_times).map(|(m, p)| m.t - p).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(invalid("non-finite sync time"));
    }
    diffs.sort_by(f64::total_cmp);
    let n = diffs.len();
    Ok(if n % 2 == 1 { diffs[n / 2] } else { 0.5 * (diffs[n / 2 - 1] + diffs[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedMarker {
    pub marker: Marker,
    pub start_index: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochReport {
    pub dropped: Vec<DroppedMarker>,
}

/// First sample index of the window `[m.t - offset + pre_s, ..)` on a
/// recording starting at `t0`.
pub fn window_start_index(marker_t: f64, offset: f64, pre_s: f64, t0: f64, fs: f64) -> i64 {
    ((marker_t - offset + pre_s - t0) * fs).round() as i64
}

/// Cuts half-open windows `[m.t - offset + pre_s, m.t - offset + post_s)`.
///
/// Markers whose window leaves the recording are dropped and reported, never
/// padded. Epochs come out in marker-time order.
pub fn epoch_by_markers(
    rec: &SignalBlock,
    markers: &[Marker],
    pre_s: f64,
    post_s: f64,
    offset: f64,
) -> Result<(EpochSet, EpochReport)> {
    if !(rec.fs > 0.0) {
        return Err(Error::InvalidRecording(format!("fs must be > 0, got {}", rec.fs)));
    }
    if rec.is_empty() {
        return Err(Error::InvalidRecording("recording has no samples".into()));
    }
    if !(pre_s < post_s) {
        return Err(invalid(format!("pre_s {pre_s} must be < post_s {post_s}")));
    }
    let len = EpochSet::epoch_len(rec.fs, pre_s, post_s);
    let total = rec.len() as i64;
    let mut sorted = markers.to_vec();
    sort_markers(&mut sorted);

    let mut epochs = Vec::new();
    let mut report = EpochReport::default();
    for m in sorted {
        let start = window_start_index(m.t, offset, pre_s, rec.t0, rec.fs);
        if start < 0 || start + len as i64 > total {
            report.dropped.push(DroppedMarker {
                reason: format!("window [{start}, {}) outside recording [0, {total})", start + len as i64),
                marker: m,
                start_index: start,
            });
            continue;
        }
        let s = start as usize;
        epochs.push(Epoch {
            data: rec.samples.iter().map(|row| row[s..s + len].to_vec()).collect(),
            class_id: m.class_id,
            marker_t: m.t,
        });
    }
    Ok((EpochSet { epochs, fs: rec.fs, channels: rec.channels.clone(), pre_s, post_s }, report))
}
