//! Headless two-class obstacle-avoidance arena driven by classifier decisions.
//!
//! Obstacle `k` is announced at `k·inter_obstacle_s`. The first decision that
//! arrives inside `[announce, announce + decision_window_s]` is binding; the
//! outcome is emitted once the window has closed.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::itr_bits_per_selection;
use crate::error::{Error, Result};
use crate::signal::Marker;

pub const ANNOUNCE_LABEL: &str = "obstacle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSequence {
    Explicit(Vec<u32>),
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackFlags {
    pub auditory: bool,
    pub visual: bool,
}

impl Default for FeedbackFlags {
    fn default() -> Self {
        Self { auditory: true, visual: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_obstacles: usize,
    pub inter_obstacle_s: f64,
    pub decision_window_s: f64,
    pub sequence: ClassSequence,
    #[serde(default)]
    pub feedback: FeedbackFlags,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_obstacles == 0 {
            return Err(Error::InvalidArgument("n_obstacles must be >= 1".into()));
        }
        if !(self.decision_window_s > 0.0 && self.inter_obstacle_s > self.decision_window_s) {
            return Err(Error::InvalidArgument(format!(
                "need inter_obstacle_s ({}) > decision_window_s ({}) > 0",
                self.inter_obstacle_s, self.decision_window_s
            )));
        }
        if let ClassSequence::Explicit(seq) = &self.sequence {
            if seq.len() != self.n_obstacles {
                return Err(Error::DimensionMismatch { expected: self.n_obstacles, got: seq.len() });
            }
            if let Some(c) = seq.iter().find(|&&c| c > 1) {
                return Err(Error::InvalidArgument(format!("obstacle class {c} is not 0 or 1")));
            }
        }
        Ok(())
    }

    /// Explicit sequences verbatim; seeded ones are a shuffled balanced list.
    pub fn classes(&self) -> Vec<u32> {
        match &self.sequence {
            ClassSequence::Explicit(seq) => seq.clone(),
            ClassSequence::Seeded(seed) => {
                let mut seq: Vec<u32> = (0..self.n_obstacles).map(|k| (k % 2) as u32).collect();
                seq.shuffle(&mut crate::rng::seeded(*seed));
                seq
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Avoided,
    Hit,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRecord {
    pub index: usize,
    pub class_id: u32,
    pub announce_t: f64,
    pub decision: Option<u32>,
    pub decision_t: Option<f64>,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Announce { index: usize, t: f64, class_id: u32 },
    Decision { index: usize, t: f64, class_id: u32 },
    Ignored { t: f64, class_id: u32 },
    Outcome { index: usize, t: f64, outcome: Outcome, auditory: bool, visual: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSession {
    pub config: SimConfig,
    pub clock: f64,
    pub records: Vec<ObstacleRecord>,
    pub markers: Vec<Marker>,
    pub ignored_decisions: usize,
    /// Every `(t, decision)` passed to `step`, for replay.
    pub trace: Vec<(f64, Option<u32>)>,
    classes: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScore {
    pub avoided: usize,
    pub hit: usize,
    pub timeout: usize,
    pub accuracy: f64,
    pub itr_bits_per_selection: f64,
    pub itr_bits_per_min: f64,
    pub partial: bool,
}

pub fn new_session(config: SimConfig) -> Result<SimSession> {
    config.validate()?;
    let classes = config.classes();
    Ok(SimSession {
        config,
        clock: 0.0,
        records: Vec::new(),
        markers: Vec::new(),
        ignored_decisions: 0,
        trace: Vec::new(),
        classes,
    })
}

impl SimSession {
    pub fn announce_time(&self, k: usize) -> f64 {
        k as f64 * self.config.inter_obstacle_s
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == self.config.n_obstacles && self.records.iter().all(|r| r.outcome.is_some())
    }

    /// Time after which every window has closed.
    pub fn end_time(&self) -> f64 {
        self.announce_time(self.config.n_obstacles - 1) + self.config.decision_window_s
    }

    /// Advances the clock to `now` and applies an optional decision.
    pub fn step(&mut self, now: f64, decision: Option<u32>) -> Result<Vec<SimEvent>> {
        if now < self.clock || now.is_nan() {
            return Err(Error::InvalidArgument(format!("time went backwards: {now} < {}", self.clock)));
        }
        self.clock = now;
        self.trace.push((now, decision));
        let mut events = Vec::new();
        while self.records.len() < self.config.n_obstacles && self.announce_time(self.records.len()) <= now {
            let index = self.records.len();
            let t = self.announce_time(index);
            let class_id = self.classes[index];
            self.records.push(ObstacleRecord { index, class_id, announce_t: t, decision: None, decision_t: None, outcome: None });
            self.markers.push(Marker::new(t, ANNOUNCE_LABEL, Some(class_id)));
            events.push(SimEvent::Announce { index, t, class_id });
        }
        let window = self.config.decision_window_s;
        for r in self.records.iter_mut().filter(|r| r.outcome.is_none() && r.announce_t + window < now) {
            let outcome = match r.decision {
                Some(d) if d == r.class_id => Outcome::Avoided,
                Some(_) => Outcome::Hit,
                None => Outcome::Timeout,
            };
            r.outcome = Some(outcome);
            events.push(SimEvent::Outcome {
                index: r.index,
                t: r.announce_t + window,
                outcome,
                auditory: self.config.feedback.auditory,
                visual: self.config.feedback.visual,
            });
        }
        if let Some(class_id) = decision {
            let open = self.records.iter_mut().find(|r| r.outcome.is_none() && r.announce_t <= now && now <= r.announce_t + window);
            match open {
                Some(r) if r.decision.is_none() => {
                    r.decision = Some(class_id);
                    r.decision_t = Some(now);
                    events.push(SimEvent::Decision { index: r.index, t: now, class_id });
                }
                _ => {
                    self.ignored_decisions += 1;
                    events.push(SimEvent::Ignored { t: now, class_id });
                }
            }
        }
        Ok(events)
    }

    /// Runs the clock past the last window so every obstacle has an outcome.
    pub fn finish(&mut self) -> Result<Vec<SimEvent>> {
        let end = self.end_time();
        let t = f64::max(self.clock, end + 1e-6);
        self.step(t, None)
    }

    pub fn score(&self) -> SimScore {
        let count = |o: Outcome| self.records.iter().filter(|r| r.outcome == Some(o)).count();
        let avoided = count(Outcome::Avoided);
        let accuracy = avoided as f64 / self.config.n_obstacles as f64;
        let bits = itr_bits_per_selection(2, accuracy);
        SimScore {
            avoided,
            hit: count(Outcome::Hit),
            timeout: count(Outcome::Timeout),
            accuracy,
            itr_bits_per_selection: bits,
            itr_bits_per_min: bits * 60.0 / self.config.inter_obstacle_s,
            partial: !self.is_complete(),
        }
    }

    /// One JSON object per obstacle.
    pub fn log_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }

    /// Rebuilds a session from its config and recorded trace.
    pub fn replay(config: SimConfig, trace: &[(f64, Option<u32>)]) -> Result<SimSession> {
        let mut s = new_session(config)?;
        for &(t, d) in trace {
            s.step(t, d)?;
        }
        Ok(s)
    }
}
