//! Seeded synthetic EEG.
//!
//! Background is Voss–McCartney pink noise plus white noise. The pink
//! generator keeps 16 Gaussian rows; at sample `n > 0` the row indexed by the
//! number of trailing zeros of `n` is redrawn, so row `k` refreshes every
//! `2^k` samples. The row sum plus one fresh white draw is scaled by
//! `1/sqrt(17)` for unit variance before the gain is applied.
//!
//! Every channel draws from its own [`crate::rng::substream`], so channels can
//! be generated in parallel and the output depends only on the synthesis settings.
//! Samples are rounded to `f32` precision, matching what the file format and
//! the wire protocol carry.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{substream, XorShiftRng};
use crate::signal::{sort_markers, ChannelInfo, ChannelRole, Marker, SignalBlock};

pub const PINK_ROWS: usize = 16;
/// Raised-cosine ERP template length.
pub const ERP_WIDTH_S: f64 = 0.3;
pub const BLINK_WIDTH_S: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    #[serde(default)]
    pub pink_gain: f64,
    #[serde(default)]
    pub white_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvepSource {
    pub label: String,
    #[serde(default)]
    pub class_id: Option<u32>,
    pub freq_hz: f64,
    pub channels: Vec<usize>,
    pub amplitude_uv: f64,
    /// `[on, off)` intervals in seconds; empty means on for the whole recording.
    #[serde(default)]
    pub intervals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpSource {
    pub label: String,
    #[serde(default)]
    pub class_id: Option<u32>,
    pub latency_s: f64,
    pub amplitude_uv: f64,
    pub channels: Vec<usize>,
    /// Stimulus onsets; one marker each.
    pub onsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlinkSpec {
    pub rate_per_min: f64,
    pub amplitude_uv: f64,
    /// Channels receiving the shared transient.
    pub channels: Vec<usize>,
    /// Channel tagged as the EOG reference, if any.
    #[serde(default)]
    pub eog_channel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub fs: f64,
    pub n_channels: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub ssvep: Vec<SsvepSource>,
    #[serde(default)]
    pub erp: Vec<ErpSource>,
    #[serde(default)]
    pub blink: Option<BlinkSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub start_time: f64,
}

impl SynthSpec {
    pub fn new(duration_s: f64, fs: f64, n_channels: usize, seed: u64) -> Self {
        Self {
            duration_s,
            fs,
            n_channels,
            noise: NoiseSpec::default(),
            ssvep: Vec::new(),
            erp: Vec::new(),
            blink: None,
            seed,
            start_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec_err = |m: String| Err(Error::Spec(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return spec_err(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return spec_err(format!("fs must be > 0, got {}", self.fs));
        }
        if self.n_channels == 0 {
            return spec_err("n_channels must be >= 1".into());
        }
        if self.noise.pink_gain < 0.0 || self.noise.white_gain < 0.0 {
            return spec_err("noise gains must be >= 0".into());
        }
        let check_channels = |chs: &[usize], what: &str| -> Result<()> {
            match chs.iter().find(|&&c| c >= self.n_channels) {
                Some(c) => Err(Error::Spec(format!("{what} channel {c} out of range"))),
                None => Ok(()),
            }
        };
        for s in &self.ssvep {
            if !(s.freq_hz > 0.0 && s.freq_hz < self.fs / 2.0) {
                return spec_err(format!(
                    "SSVEP frequency {} Hz must lie in (0, fs/2 = {} Hz)",
                    s.freq_hz,
                    self.fs / 2.0
                ));
            }
            check_channels(&s.channels, "SSVEP")?;
            if s.intervals.iter().any(|[a, b]| !(a < b)) {
                return spec_err(format!("SSVEP '{}' has an empty interval", s.label));
            }
        }
        for e in &self.erp {
            check_channels(&e.channels, "ERP")?;
        }
        if let Some(b) = &self.blink {
            check_channels(&b.channels, "blink")?;
            if let Some(c) = b.eog_channel {
                check_channels(&[c], "EOG")?;
            }
            if !(b.rate_per_min >= 0.0) {
                return spec_err("blink rate must be >= 0".into());
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }
}

/// Voss–McCartney pink noise with unit variance.
pub fn pink_noise(n: usize, rng: &mut XorShiftRng) -> Vec<f64> {
    let mut rows = [0.0f64; PINK_ROWS];
    for r in rows.iter_mut() {
        *r = rng.sample(StandardNormal);
    }
    let mut sum: f64 = rows.iter().sum();
    let scale = 1.0 / ((PINK_ROWS + 1) as f64).sqrt();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let k = (i as u64).trailing_zeros() as usize;
            if k < PINK_ROWS {
                let fresh: f64 = rng.sample(StandardNormal);
                sum += fresh - rows[k];
                rows[k] = fresh;
            }
        }
        let white: f64 = rng.sample(StandardNormal);
        out.push((sum + white) * scale);
    }
    out
}

fn raised_cosine(t: f64, center: f64, width: f64) -> f64 {
    let d = t - center;
    if d.abs() >= width / 2.0 {
        0.0
    } else {
        0.5 * (1.0 + (2.0 * PI * d / width).cos())
    }
}

fn blink_times(spec: &SynthSpec, b: &BlinkSpec) -> Vec<f64> {
    if b.rate_per_min <= 0.0 {
        return Vec::new();
    }
    let mut rng = substream(spec.seed, u64::MAX);
    let exp = Exp::new(b.rate_per_min / 60.0).expect("positive rate");
    let mut t = 0.5;
    let mut out = Vec::new();
    loop {
        t += exp.sample(&mut rng).max(BLINK_WIDTH_S);
        if t + BLINK_WIDTH_S > spec.duration_s {
            break;
        }
        out.push(t);
    }
    out
}

/// Generates the recording and its markers.
pub fn synth_recording(spec: &SynthSpec) -> Result<(SignalBlock, Vec<Marker>)> {
    spec.validate()?;
    let n = spec.n_samples().max(1);
    let fs = spec.fs;
    let blinks = spec.blink.as_ref().map(|b| blink_times(spec, b)).unwrap_or_default();

    let rows = par::map_range(spec.n_channels, |ch| {
        let mut rng = substream(spec.seed, ch as u64);
        let mut x = if spec.noise.pink_gain > 0.0 {
            pink_noise(n, &mut rng).into_iter().map(|v| v * spec.noise.pink_gain).collect()
        } else {
            vec![0.0; n]
        };
        if spec.noise.white_gain > 0.0 {
            let mut wrng = substream(spec.seed ^ 0x5757_5757, ch as u64);
            for v in x.iter_mut() {
                let w: f64 = wrng.sample(StandardNormal);
                *v += spec.noise.white_gain * w;
            }
        }
        for s in spec.ssvep.iter().filter(|s| s.channels.contains(&ch)) {
            let w = 2.0 * PI * s.freq_hz;
            for (k, v) in x.iter_mut().enumerate() {
                let t = k as f64 / fs;
                let on = s.intervals.is_empty() || s.intervals.iter().any(|[a, b]| t >= *a && t < *b);
                if on {
                    *v += s.amplitude_uv * (w * t).sin();
                }
            }
        }
        for e in spec.erp.iter().filter(|e| e.channels.contains(&ch)) {
            for &onset in &e.onsets {
                add_bump(&mut x, fs, onset + e.latency_s, ERP_WIDTH_S, e.amplitude_uv);
            }
        }
        if let Some(b) = spec.blink.as_ref().filter(|b| b.channels.contains(&ch)) {
            for &t in &blinks {
                add_bump(&mut x, fs, t + BLINK_WIDTH_S / 2.0, BLINK_WIDTH_S, b.amplitude_uv);
            }
        }
        x.into_iter().map(|v| v as f32 as f64).collect::<Vec<f64>>()
    });

    let mut channels = ChannelInfo::numbered(spec.n_channels);
    if let Some(c) = spec.blink.as_ref().and_then(|b| b.eog_channel) {
        channels[c].role = ChannelRole::EogReference;
        channels[c].name = format!("eog{c}");
    }
    let block = SignalBlock::new(rows, fs, spec.start_time, channels)?;

    let mut markers = Vec::new();
    for s in &spec.ssvep {
        if s.intervals.is_empty() {
            markers.push(Marker::new(spec.start_time, s.label.clone(), s.class_id));
        } else {
            for [on, _] in &s.intervals {
                markers.push(Marker::new(spec.start_time + on, s.label.clone(), s.class_id));
            }
        }
    }
    for e in &spec.erp {
        for &onset in &e.onsets {
            markers.push(Marker::new(spec.start_time + onset, e.label.clone(), e.class_id));
        }
    }
    for &t in &blinks {
        markers.push(Marker::new(spec.start_time + t, "blink", None));
    }
    sort_markers(&mut markers);
    Ok((block, markers))
}

fn add_bump(x: &mut [f64], fs: f64, center: f64, width: f64, amp: f64) {
    let lo = (((center - width / 2.0) * fs).floor().max(0.0)) as usize;
    let hi = (((center + width / 2.0) * fs).ceil() as usize + 1).min(x.len());
    for (k, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        *v += amp * raised_cosine(k as f64 / fs, center, width);
    }
}
