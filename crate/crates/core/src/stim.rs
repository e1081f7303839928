//! Stimulus and marker timelines for ERP, SSVEP and calibration paradigms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::signal::Marker;

/// Classes with weight at or below this are treated as rare and kept apart.
pub const RARE_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpScheduleSpec {
    pub cue_time_s: f64,
    pub buffer_time_s: f64,
    pub fixation_time_s: f64,
    pub n_classes: usize,
    pub trial_count: usize,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ErpScheduleSpec {
    /// Equal weights over `n_classes`.
    pub fn uniform(cue: f64, buffer: f64, fixation: f64, n_classes: usize, trials: usize, seed: u64) -> Self {
        Self {
            cue_time_s: cue,
            buffer_time_s: buffer,
            fixation_time_s: fixation,
            n_classes,
            trial_count: trials,
            weights: vec![1.0 / n_classes as f64; n_classes],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let times = [self.cue_time_s, self.buffer_time_s, self.fixation_time_s];
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Spec("cue, buffer and fixation times must be finite and >= 0".into()));
        }
        if self.trial_count < 1 {
            return Err(Error::Spec("trial_count must be >= 1".into()));
        }
        if self.n_classes < 1 || self.weights.len() != self.n_classes {
            return Err(Error::Spec(format!(
                "{} weights given for {} classes",
                self.weights.len(),
                self.n_classes
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Spec("weights must be nonnegative".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvepStimulus {
    pub label: String,
    pub freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvepScheduleSpec {
    pub stimuli: Vec<SsvepStimulus>,
    pub duration_s: f64,
}

impl SsvepScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Spec("duration_s must be > 0".into()));
        }
        for (i, s) in self.stimuli.iter().enumerate() {
            if !(s.freq_hz > 0.0 && s.freq_hz.is_finite()) {
                return Err(Error::Spec(format!("stimulus '{}' frequency must be > 0", s.label)));
            }
            if self.stimuli[..i].iter().any(|o| o.freq_hz == s.freq_hz) {
                return Err(Error::Spec(format!("duplicate flicker frequency {} Hz", s.freq_hz)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusEvent {
    pub t_on: f64,
    pub t_off: f64,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusTimeline {
    pub events: Vec<StimulusEvent>,
    pub total_duration_s: f64,
}

impl StimulusTimeline {
    /// One marker per event at its onset.
    pub fn to_markers(&self) -> Vec<Marker> {
        self.events.iter().map(|e| Marker::new(e.t_on, e.label.clone(), e.class_id)).collect()
    }

    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; n_classes];
        for c in self.events.iter().filter_map(|e| e.class_id) {
            if (c as usize) < n_classes {
                counts[c as usize] += 1;
            }
        }
        counts
    }
}

/// Total experiment time: (cue + buffer) * trials + fixation.
pub fn schedule_duration(spec: &ErpScheduleSpec) -> Result<f64> {
    spec.validate()?;
    Ok((spec.cue_time_s + spec.buffer_time_s) * spec.trial_count as f64 + spec.fixation_time_s)
}

/// Largest-remainder apportionment of `total` items by `weights`.
/// Ties in the remainder go to the lower class index.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// True if the rare classes can still be laid out without repeats, given
/// `remaining` counts and that `prev` was just placed.
fn feasible(remaining: &[usize], rare: &[bool], prev: Option<usize>) -> bool {
    let n: usize = remaining.iter().sum();
    remaining.iter().enumerate().all(|(c, &r)| {
        if !rare[c] || r == 0 {
            return true;
        }
        let others = n - r;
        if prev == Some(c) {
            r <= others
        } else {
            r <= others + 1
        }
    })
}

/// Seeded class order with rare classes never repeated back to back
/// unless the counts force it.
fn constrained_order(counts: &[usize], weights: &[f64], seed: u64) -> Vec<usize> {
    let rare: Vec<bool> = weights.iter().map(|&w| w <= RARE_WEIGHT).collect();
    let mut remaining = counts.to_vec();
    let total: usize = counts.iter().sum();
    let mut rng = seeded(seed);
    let mut order = Vec::with_capacity(total);
    let mut prev: Option<usize> = None;
    for _ in 0..total {
        let mut candidates: Vec<usize> = (0..remaining.len())
            .filter(|&c| remaining[c] > 0)
            .filter(|&c| !(rare[c] && prev == Some(c)))
            .filter(|&c| {
                let mut next = remaining.clone();
                next[c] -= 1;
                feasible(&next, &rare, Some(c))
            })
            .collect();
        if candidates.is_empty() {
            // unavoidable repeat
            candidates = (0..remaining.len()).filter(|&c| remaining[c] > 0).collect();
        }
        let weight_sum: usize = candidates.iter().map(|&c| remaining[c]).sum();
        let mut pick = rng.random_range(0..weight_sum);
        let mut chosen = candidates[0];
        for &c in &candidates {
            if pick < remaining[c] {
                chosen = c;
                break;
            }
            pick -= remaining[c];
        }
        remaining[chosen] -= 1;
        order.push(chosen);
        prev = Some(chosen);
    }
    order
}

pub fn erp_label(class_id: usize) -> String {
    format!("erp:{class_id}")
}

pub fn build_erp_schedule(spec: &ErpScheduleSpec) -> Result<StimulusTimeline> {
    let total = schedule_duration(spec)?;
    let counts = apportion(&spec.weights, spec.trial_count);
    let order = constrained_order(&counts, &spec.weights, spec.seed);
    let period = spec.cue_time_s + spec.buffer_time_s;
    let events = order
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let t_on = spec.fixation_time_s + k as f64 * period;
            StimulusEvent { t_on, t_off: t_on + spec.cue_time_s, label: erp_label(c), class_id: Some(c as u32) }
        })
        .collect();
    Ok(StimulusTimeline { events, total_duration_s: total })
}

/// Flicker toggles every half period; event `k` spans `[k, k+1) / (2f)` and
/// only whole half periods inside the duration are emitted.
pub fn build_ssvep_schedule(spec: &SsvepScheduleSpec) -> Result<StimulusTimeline> {
    spec.validate()?;
    let mut events = Vec::new();
    for (class, s) in spec.stimuli.iter().enumerate() {
        let half = 1.0 / (2.0 * s.freq_hz);
        let count = (2.0 * s.freq_hz * spec.duration_s + 1e-9).floor() as usize;
        for k in 0..count {
            let phase = if k % 2 == 0 { "on" } else { "off" };
            events.push(StimulusEvent {
                t_on: k as f64 * half,
                t_off: (k + 1) as f64 * half,
                label: format!("{}:{phase}", s.label),
                class_id: Some(class as u32),
            });
        }
    }
    events.sort_by(|a, b| a.t_on.total_cmp(&b.t_on));
    Ok(StimulusTimeline { events, total_duration_s: spec.duration_s })
}

pub fn build_calibration_schedule(n_beeps: usize, interval_s: f64) -> Result<StimulusTimeline> {
    if n_beeps < 1 {
        return Err(Error::Spec("n_beeps must be >= 1".into()));
    }
    if !(interval_s > 0.0 && interval_s.is_finite()) {
        return Err(Error::Spec("interval_s must be > 0".into()));
    }
    let events = (0..n_beeps)
        .map(|k| {
            let t = k as f64 * interval_s;
            StimulusEvent { t_on: t, t_off: t, label: "beep".into(), class_id: None }
        })
        .collect();
    Ok(StimulusTimeline { events, total_duration_s: (n_beeps - 1) as f64 * interval_s })
}
