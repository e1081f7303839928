use serde_json::{json, Value as Json};
use std::collections::VecDeque;

use noetic_core::signal::{reindex, window_start_index, DroppedMarker, Epoch, EpochSet, Marker};

use super::{Ctx, Node, NodeResult, Params};
use crate::value::{StreamChunk, StreamInfo, Value};

/// Seconds of history kept for markers that arrive after their data.
pub const LATE_MARKER_S: f64 = 10.0;

/// Samples retained from a stream, indexed from stream start.
#[derive(Default)]
pub(crate) struct SampleBuffer {
    pub info: Option<StreamInfo>,
    pub data: Vec<Vec<f64>>,
    /// Absolute index of `data[_][0]`.
    pub start: u64,
    /// Absolute index one past the last buffered sample.
    pub end: u64,
}

impl SampleBuffer {
    /// Appends a chunk; a new channel layout or a gap restarts the buffer.
    /// Returns true when it restarted.
    pub fn push(&mut self, chunk: &StreamChunk) -> bool {
        let layout_changed = self
            .info
            .as_ref()
            .is_none_or(|i| i.channels != chunk.info.channels || i.fs != chunk.info.fs || i.start_time != chunk.info.start_time);
        let restart = layout_changed || chunk.start_index != self.end;
        if restart {
            self.info = Some(chunk.info.clone());
            self.data = vec![Vec::new(); chunk.info.channels.len()];
            self.start = chunk.start_index;
            self.end = chunk.start_index;
        }
        for (row, src) in self.data.iter_mut().zip(&chunk.samples) {
            row.extend_from_slice(src);
        }
        self.end += chunk.len() as u64;
        restart
    }

    pub fn slice(&self, from: u64, len: usize) -> Vec<Vec<f64>> {
        let a = (from - self.start) as usize;
        self.data.iter().map(|row| row[a..a + len].to_vec()).collect()
    }

    pub fn trim_to(&mut self, keep_from: u64) {
        let keep_from = keep_from.clamp(self.start, self.end);
        let k = (keep_from - self.start) as usize;
        if k > 0 {
            for row in &mut self.data {
                row.drain(..k);
            }
            self.start = keep_from;
        }
    }

    fn epoch_set(&self, epochs: Vec<Epoch>, pre_s: f64, post_s: f64) -> EpochSet {
        let info = self.info.as_ref().expect("buffer has seen a chunk");
        EpochSet { epochs, fs: info.fs, channels: reindex(info.channels.iter().cloned()), pre_s, post_s }
    }
}

struct Pending {
    marker: Marker,
    start: i64,
}

/// Marker-locked epochs cut as soon as their window is complete.
pub struct MarkerEpocher {
    pre_s: f64,
    post_s: f64,
    offset_s: f64,
    labels: Option<Vec<String>>,
    require_class: bool,
    buf: SampleBuffer,
    pending: VecDeque<Pending>,
    dropped: Vec<DroppedMarker>,
    emitted: usize,
}

impl MarkerEpocher {
    pub fn build(p: &Params<'_>) -> NodeResult<Self> {
        let pre_s: f64 = p.need("pre_s")?;
        let post_s: f64 = p.need("post_s")?;
        if !(pre_s < post_s) {
            return Err(format!("pre_s {pre_s} must be < post_s {post_s}"));
        }
        Ok(Self {
            pre_s,
            post_s,
            offset_s: p.need("offset_s")?,
            labels: p.parse("labels")?,
            require_class: p.need("require_class")?,
            buf: SampleBuffer::default(),
            pending: VecDeque::new(),
            dropped: Vec::new(),
            emitted: 0,
        })
    }

    fn wanted(&self, m: &Marker) -> bool {
        self.labels.as_ref().is_none_or(|l| l.contains(&m.label)) && (!self.require_class || m.class_id.is_some())
    }

    fn drop_marker(&mut self, p: Pending, reason: String) {
        self.dropped.push(DroppedMarker { marker: p.marker, start_index: p.start, reason });
    }

    fn cut(&mut self, flush: bool) -> Vec<Epoch> {
        let Some(info) = self.buf.info.clone() else {
            let rest: Vec<_> = self.pending.drain(..).collect();
            for p in rest {
                self.drop_marker(p, "stream carried no samples".into());
            }
            return Vec::new();
        };
        let len = EpochSet::epoch_len(info.fs, self.pre_s, self.post_s);
        let mut out = Vec::new();
        while let Some(front) = self.pending.front() {
            let start = front.start;
            if start < self.buf.start as i64 {
                let p = self.pending.pop_front().expect("front");
                let reason = format!("window start {start} precedes retained samples from {}", self.buf.start);
                self.drop_marker(p, reason);
            } else if start as u64 + len as u64 <= self.buf.end {
                let p = self.pending.pop_front().expect("front");
                out.push(Epoch { data: self.buf.slice(start as u64, len), class_id: p.marker.class_id, marker_t: p.marker.t });
            } else if flush {
                let p = self.pending.pop_front().expect("front");
                let reason = format!("window [{start}, {}) extends past stream end {}", start + len as i64, self.buf.end);
                self.drop_marker(p, reason);
            } else {
                break;
            }
        }
        let history = (LATE_MARKER_S * info.fs).ceil() as u64 + len as u64;
        let keep = match self.pending.front() {
            Some(p) => (p.start.max(0) as u64).min(self.buf.end.saturating_sub(history)),
            None => self.buf.end.saturating_sub(history),
        };
        self.buf.trim_to(keep);
        out
    }

    fn output(&mut self, epochs: Vec<Epoch>) -> Option<Value> {
        if epochs.is_empty() {
            return None;
        }
        self.emitted += epochs.len();
        Some(Value::Epochs(self.buf.epoch_set(epochs, self.pre_s, self.post_s)))
    }
}

impl Node for MarkerEpocher {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Some(Value::Raw(chunk)) = inputs.into_iter().next() else {
            return Err("expected a raw stream".into());
        };
        if self.buf.push(&chunk) && !self.pending.is_empty() {
            let stale: Vec<_> = self.pending.drain(..).collect();
            for p in stale {
                self.drop_marker(p, "stream layout changed before the window completed".into());
            }
        }
        let info = &chunk.info;
        let mut fresh: Vec<&Marker> = chunk.markers.iter().filter(|m| self.wanted(m)).collect();
        fresh.sort_by(|a, b| a.t.total_cmp(&b.t));
        for m in fresh {
            let start = window_start_index(m.t, self.offset_s, self.pre_s, info.start_time, info.fs);
            let p = Pending { marker: m.clone(), start };
            if start < 0 {
                self.drop_marker(p, format!("window start {start} precedes the recording"));
                continue;
            }
            let at = self.pending.partition_point(|q| q.marker.t <= m.t);
            self.pending.insert(at, p);
        }
        let epochs = self.cut(false);
        Ok(self.output(epochs))
    }

    fn finish(&mut self, _ctx: &mut Ctx<'_>) -> NodeResult<Option<Value>> {
        let epochs = self.cut(true);
        Ok(self.output(epochs))
    }

    fn report(&self) -> Option<Json> {
        Some(json!({ "epochs": self.emitted, "dropped": self.dropped }))
    }
}

/// Unlabeled windows every `step_s` from stream start.
pub struct SlidingEpocher {
    window_s: f64,
    step_s: f64,
    buf: SampleBuffer,
    next: u64,
    emitted: usize,
}

impl SlidingEpocher {
    pub fn build(p: &Params<'_>) -> NodeResult<Self> {
        let window_s: f64 = p.need("window_s")?;
        let step_s: f64 = p.need("step_s")?;
        if !(window_s > 0.0 && step_s > 0.0) {
            return Err(format!("window_s ({window_s}) and step_s ({step_s}) must be > 0"));
        }
        Ok(Self { window_s, step_s, buf: SampleBuffer::default(), next: 0, emitted: 0 })
    }
}

impl Node for SlidingEpocher {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Some(Value::Raw(chunk)) = inputs.into_iter().next() else {
            return Err("expected a raw stream".into());
        };
        if self.buf.push(&chunk) {
            self.next = self.next.max(self.buf.start);
        }
        let info = self.buf.info.clone().expect("pushed");
        let len = EpochSet::epoch_len(info.fs, 0.0, self.window_s);
        let step = ((self.step_s * info.fs).round() as u64).max(1);
        let mut epochs = Vec::new();
        while self.next + len as u64 <= self.buf.end {
            let marker_t = info.start_time + self.next as f64 / info.fs;
            epochs.push(Epoch { data: self.buf.slice(self.next, len), class_id: None, marker_t });
            self.next += step;
        }
        self.buf.trim_to(self.next);
        if epochs.is_empty() {
            return Ok(None);
        }
        self.emitted += epochs.len();
        Ok(Some(Value::Epochs(self.buf.epoch_set(epochs, 0.0, self.window_s))))
    }

    fn report(&self) -> Option<Json> {
        Some(json!({ "epochs": self.emitted }))
    }
}
