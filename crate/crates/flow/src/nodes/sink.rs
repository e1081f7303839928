use serde::Serialize;
use serde_json::{json, Value as Json};
use std::path::Path;

use noetic_core::features::{amplitude_spectrum, welch_psd, FeatureMatrix};
use noetic_core::io::{encode_recording, write_atomic};
use noetic_core::preprocess::ica_fit;
use noetic_core::signal::{Marker, SignalBlock};

use super::{err, BuildCtx, Ctx, Mode, Node, NodeResult, Params};
use crate::catalog::PortType;
use crate::value::{decimate, Event, PlotFrame, PlotKind, PlotPayload, StreamInfo, Value, MAX_PLOT_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SinkOutput {
    File {
        path: Option<String>,
        media: String,
        #[serde(skip)]
        bytes: Vec<u8>,
        size: usize,
    },
    Plot {
        frames: Vec<PlotFrame>,
    },
    Decisions {
        events: Vec<Event>,
    },
}

fn series(channels: Vec<String>, t0: f64, fs: f64, data: &[Vec<f64>]) -> PlotPayload {
    let mut stride = 1;
    let data = data
        .iter()
        .map(|row| {
            let (d, s) = decimate(row, MAX_PLOT_POINTS);
            stride = s;
            d
        })
        .collect();
    PlotPayload::Series { channels, t0, dt: stride as f64 / fs, data }
}

fn spectrum(channels: Vec<String>, freqs: Vec<f64>, power: Vec<Vec<f64>>) -> PlotPayload {
    let (freqs, _) = decimate(&freqs, MAX_PLOT_POINTS);
    let power = power.iter().map(|p| decimate(p, MAX_PLOT_POINTS).0).collect();
    PlotPayload::Spectrum { channels, freqs, power }
}

/// Emits decimated plot frames: one per `window_samples` of stream, per
/// epoch, per spectrum segment or per event.
pub struct Plot {
    kind: PlotKind,
    window: usize,
    keep: bool,
    seed: u64,
    seq: u64,
    info: Option<StreamInfo>,
    pending: Vec<Vec<f64>>,
    pending_start: u64,
    frames: Vec<PlotFrame>,
}

impl Plot {
    pub fn build(p: &Params<'_>, ctx: &BuildCtx<'_>) -> NodeResult<Self> {
        let name: String = p.need("kind")?;
        let kind = PlotKind::parse(&name).ok_or_else(|| format!("unknown plot kind '{name}'"))?;
        let input = ctx.input.expect("sinks have an input");
        let ok = match input {
            PortType::RawStream | PortType::Epochs => kind != PlotKind::Decision,
            PortType::Spectrum => matches!(kind, PlotKind::Fft | PlotKind::Periodogram),
            PortType::Events => kind == PlotKind::Decision,
            _ => false,
        };
        if !ok {
            return Err(format!("plot kind '{name}' cannot show {}", input.name()));
        }
        let window: usize = p.need("window_samples")?;
        if window < 2 {
            return Err(format!("window_samples must be >= 2, got {window}"));
        }
        Ok(Self {
            kind,
            window,
            keep: ctx.mode == Mode::Offline,
            seed: ctx.seed,
            seq: 0,
            info: None,
            pending: Vec::new(),
            pending_start: 0,
            frames: Vec::new(),
        })
    }

    fn emit(&mut self, ctx: &mut Ctx<'_>, t: f64, payload: PlotPayload) {
        let frame = PlotFrame {
            session: ctx.session.to_string(),
            node: ctx.node.to_string(),
            kind: self.kind,
            seq: self.seq,
            t,
            source_t0: ctx.source_t0,
            payload,
        };
        self.seq += 1;
        if self.keep {
            self.frames.push(frame.clone());
        }
        ctx.out.plots.push(frame);
    }

    fn signal_payload(&self, names: Vec<String>, t0: f64, fs: f64, data: &[Vec<f64>]) -> NodeResult<PlotPayload> {
        Ok(match self.kind {
            PlotKind::Raw | PlotKind::Filtered => series(names, t0, fs, data),
            PlotKind::Ic => {
                let model = ica_fit(data, self.seed.wrapping_add(self.seq)).map_err(err)?;
                let sources = model.sources(data).map_err(err)?;
                let names = (0..sources.len()).map(|k| format!("ic{k}")).collect();
                series(names, t0, fs, &sources)
            }
            PlotKind::Fft => {
                let mut freqs = Vec::new();
                let mut power = Vec::new();
                for row in data {
                    let (f, a) = amplitude_spectrum(row, fs).map_err(err)?;
                    freqs = f;
                    power.push(a);
                }
                spectrum(names, freqs, power)
            }
            PlotKind::Periodogram => {
                let mut freqs = Vec::new();
                let mut power = Vec::new();
                for row in data {
                    let s = welch_psd(row, fs).map_err(err)?;
                    freqs = s.freqs;
                    power.push(s.power);
                }
                spectrum(names, freqs, power)
            }
            PlotKind::Decision => unreachable!("checked at build"),
        })
    }

    fn flush_window(&mut self, ctx: &mut Ctx<'_>, len: usize) -> NodeResult<()> {
        let info = self.info.clone().expect("stream seen");
        let data: Vec<Vec<f64>> = self.pending.iter_mut().map(|row| row.drain(..len).collect()).collect();
        let t0 = info.start_time + self.pending_start as f64 / info.fs;
        self.pending_start += len as u64;
        let names = info.channels.iter().map(|c| c.name.clone()).collect();
        let payload = self.signal_payload(names, t0, info.fs, &data)?;
        self.emit(ctx, t0, payload);
        Ok(())
    }
}

impl Node for Plot {
    fn process(&mut self, ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        match inputs.into_iter().next() {
            Some(Value::Raw(chunk)) => {
                let expected = self.pending_start + self.pending.first().map_or(0, Vec::len) as u64;
                if self.info.as_ref() != Some(&chunk.info) || chunk.start_index != expected {
                    self.info = Some(chunk.info.clone());
                    self.pending = vec![Vec::new(); chunk.info.channels.len()];
                    self.pending_start = chunk.start_index;
                }
                for (row, src) in self.pending.iter_mut().zip(&chunk.samples) {
                    row.extend_from_slice(src);
                }
                while self.pending.first().map_or(0, Vec::len) >= self.window {
                    self.flush_window(ctx, self.window)?;
                }
            }
            Some(Value::Epochs(set)) => {
                let names: Vec<String> = set.channels.iter().map(|c| c.name.clone()).collect();
                for e in &set.epochs {
                    let t0 = e.marker_t + set.pre_s;
                    let payload = self.signal_payload(names.clone(), t0, set.fs, &e.data)?;
                    self.emit(ctx, e.marker_t, payload);
                }
            }
            Some(Value::Spectrum(batch)) => {
                for (seg, &t) in batch.segments.iter().zip(&batch.times) {
                    self.emit(ctx, t, spectrum(batch.channels.clone(), batch.freqs.clone(), seg.clone()));
                }
            }
            Some(Value::Events(events)) => {
                for e in events {
                    match e {
                        Event::Decision(d) => self.emit(ctx, d.t, PlotPayload::Decision { class_id: d.class_id, scores: d.scores }),
                        Event::Sim { event, .. } => {
                            let t = serde_json::to_value(&event).ok().and_then(|v| v["t"].as_f64()).unwrap_or(0.0);
                            self.emit(ctx, t, PlotPayload::Sim { event });
                        }
                    }
                }
            }
            _ => return Err("unsupported plot input".into()),
        }
        Ok(None)
    }

    fn finish(&mut self, ctx: &mut Ctx<'_>) -> NodeResult<Option<Value>> {
        let rest = self.pending.first().map_or(0, Vec::len);
        if rest >= 2 {
            self.flush_window(ctx, rest)?;
        }
        Ok(None)
    }

    fn report(&self) -> Option<Json> {
        Some(json!({ "frames": self.seq }))
    }

    fn take_output(&mut self) -> Option<SinkOutput> {
        Some(SinkOutput::Plot { frames: std::mem::take(&mut self.frames) })
    }
}

#[derive(Default)]
enum Collected {
    #[default]
    Nothing,
    Raw { info: StreamInfo, first: u64, samples: Vec<Vec<f64>>, markers: Vec<Marker> },
    Features(FeatureMatrix),
    Model(String),
    Lines(String),
}

/// Writes its input once the run ends: recordings as `.neeg`, features as
/// CSV, models as JSON and everything else as JSON lines.
pub struct File {
    path: Option<String>,
    collected: Collected,
    output: Option<SinkOutput>,
}

impl File {
    pub fn build(p: &Params<'_>) -> NodeResult<Self> {
        Ok(Self { path: p.parse("path")?, collected: Collected::Nothing, output: None })
    }
}

fn json_line(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("value serializes") + "\n"
}

impl Node for File {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let input = inputs.into_iter().next().ok_or("missing input")?;
        match (&mut self.collected, input) {
            (Collected::Nothing, Value::Raw(c)) => {
                self.collected = Collected::Raw { info: c.info, first: c.start_index, samples: c.samples, markers: c.markers };
            }
            (Collected::Raw { info, samples, markers, .. }, Value::Raw(c)) => {
                if *info != c.info {
                    return Err("stream layout changed; a recording file needs one layout".into());
                }
                for (row, src) in samples.iter_mut().zip(&c.samples) {
                    row.extend_from_slice(src);
                }
                markers.extend(c.markers);
            }
            (Collected::Nothing, Value::Features(b)) => self.collected = Collected::Features(b.matrix),
            (Collected::Features(m), Value::Features(b)) => {
                if m.names != b.matrix.names {
                    return Err("feature names changed between batches".into());
                }
                m.rows.extend(b.matrix.rows);
                m.labels.extend(b.matrix.labels);
                m.times.extend(b.matrix.times);
            }
            (_, Value::Model(m)) => self.collected = Collected::Model(m.to_json()),
            (Collected::Nothing, v) => {
                self.collected = Collected::Lines(String::new());
                return self.process(_ctx, vec![v]);
            }
            (Collected::Lines(text), Value::Epochs(set)) => {
                for e in &set.epochs {
                    text.push_str(&json_line(&json!({ "marker_t": e.marker_t, "class_id": e.class_id, "data": e.data })));
                }
            }
            (Collected::Lines(text), Value::Spectrum(b)) => text.push_str(&json_line(&b)),
            (Collected::Lines(text), Value::Events(events)) => {
                for e in &events {
                    text.push_str(&json_line(e));
                }
            }
            (_, v) => return Err(format!("unexpected {} input", v.port_type().name())),
        }
        Ok(None)
    }

    fn finish(&mut self, _ctx: &mut Ctx<'_>) -> NodeResult<Option<Value>> {
        let (bytes, media) = match std::mem::take(&mut self.collected) {
            Collected::Nothing => (Vec::new(), "application/octet-stream"),
            Collected::Raw { info, first, samples, markers } => {
                let t0 = info.start_time + first as f64 / info.fs;
                let block = SignalBlock::new(samples, info.fs, t0, info.channels).map_err(err)?;
                (encode_recording(&block, &markers, &info.subject_tag).map_err(err)?, "application/x-neeg")
            }
            Collected::Features(m) => (m.to_csv().map_err(err)?.into_bytes(), "text/csv"),
            Collected::Model(text) => (text.into_bytes(), "application/json"),
            Collected::Lines(text) => (text.into_bytes(), "application/x-ndjson"),
        };
        if let Some(path) = &self.path {
            write_atomic(Path::new(path), &bytes).map_err(err)?;
        }
        self.output = Some(SinkOutput::File { path: self.path.clone(), media: media.into(), size: bytes.len(), bytes });
        Ok(None)
    }

    fn take_output(&mut self) -> Option<SinkOutput> {
        self.output.take()
    }
}

#[derive(Default)]
pub struct Decisions {
    events: Vec<Event>,
}

impl Node for Decisions {
    fn process(&mut self, ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Some(Value::Events(events)) = inputs.into_iter().next() else {
            return Err("expected events".into());
        };
        ctx.out.events.extend(events.iter().cloned());
        self.events.extend(events);
        Ok(None)
    }

    fn report(&self) -> Option<Json> {
        let n = self.events.iter().filter(|e| matches!(e, Event::Decision(_))).count();
        Some(json!({ "decisions": n, "events": self.events.len() }))
    }

    fn take_output(&mut self) -> Option<SinkOutput> {
        Some(SinkOutput::Decisions { events: std::mem::take(&mut self.events) })
    }
}
