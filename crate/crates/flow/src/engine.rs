//! Executes validated graphs offline (whole recording) or online (frame by
//! frame).

use serde::Serialize;
use serde_json::Value as Json;
use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use noetic_core::io::{decode_frame, recording_to_frames, Recording, WireFrame};

use crate::catalog::IN;
use crate::error::{FlowError, FlowResult};
use crate::graph::FlowGraph;
use crate::nodes::{
    build_node, load_source, node_seed, recording_chunk, BuildCtx, Ctx, Emitted, Mode, Node, Params, SinkOutput,
};
use crate::value::{Event, StreamChunk, StreamInfo, Value};

/// Reasons kept per session for malformed frames.
pub const MAX_MALFORMED_REASONS: usize = 32;

/// Instantiated nodes plus the per-port queues between them.
pub struct Runtime {
    graph: FlowGraph,
    mode: Mode,
    session: String,
    nodes: BTreeMap<String, Box<dyn Node>>,
    queues: BTreeMap<(String, String), VecDeque<Value>>,
    timings: BTreeMap<String, Vec<f64>>,
}

fn runtime_err(node: &str, message: String) -> FlowError {
    FlowError::Runtime { node: node.into(), message }
}

impl Runtime {
    pub fn new(graph: &FlowGraph, mode: Mode, session: &str) -> FlowResult<Self> {
        let mut nodes = BTreeMap::new();
        for n in &graph.doc.nodes {
            let spec = graph.spec(&n.id);
            let params = Params::new(spec, &n.params);
            let ctx = BuildCtx {
                id: &n.id,
                mode,
                input: graph.input_type(&n.id, IN),
                seed: node_seed(graph.doc.seed, &n.id),
            };
            let node = build_node(spec, &params, &ctx).map_err(|message| FlowError::Node {
                source_path: graph.source_path.clone(),
                node: n.id.clone(),
                message,
            })?;
            nodes.insert(n.id.clone(), node);
        }
        let queues = graph.upstream.keys().map(|k| (k.clone(), VecDeque::new())).collect();
        Ok(Self { graph: graph.clone(), mode, session: session.into(), nodes, queues, timings: BTreeMap::new() })
    }

    pub fn graph(&self) -> &FlowGraph {
        &self.graph
    }

    fn route(&mut self, from: &str, value: Value) {
        let targets = self.graph.downstream.get(from).cloned().unwrap_or_default();
        let n = targets.len();
        let mut value = Some(value);
        for (i, key) in targets.into_iter().enumerate() {
            let v = if i + 1 == n { value.take().expect("value") } else { value.clone().expect("value") };
            self.queues.get_mut(&key).expect("queue per connected port").push_back(v);
        }
    }

    fn ready_inputs(&mut self, id: &str) -> Option<Vec<Value>> {
        let ports: Vec<String> = self.graph.spec(id).inputs.iter().map(|p| p.name.to_string()).collect();
        if ports.is_empty() || !ports.iter().all(|p| !self.queues[&(id.to_string(), p.clone())].is_empty()) {
            return None;
        }
        Some(ports.iter().map(|p| self.queues.get_mut(&(id.to_string(), p.clone())).expect("queue").pop_front().expect("non-empty")).collect())
    }

    /// Runs every node in topological order. Injected values feed source
    /// nodes; `flush` ends the stream so nodes release what they hold.
    pub fn tick(&mut self, inject: Vec<(String, Value)>, source_t0: f64, flush: bool) -> FlowResult<Emitted> {
        let mut out = Emitted::default();
        let mut inject: BTreeMap<String, Value> = inject.into_iter().collect();
        let order = self.graph.order.clone();
        for id in &order {
            let mut node = self.nodes.remove(id).expect("node built");
            let session = self.session.clone();
            let result = (|| -> Result<(), String> {
                let mut ctx = Ctx { mode: self.mode, session: &session, node: id, source_t0, out: &mut out };
                let mut produced = Vec::new();
                if let Some(v) = inject.remove(id) {
                    produced.extend(node.process(&mut ctx, vec![v])?);
                }
                loop {
                    let Some(inputs) = self.ready_inputs(id) else { break };
                    let start = Instant::now();
                    let r = node.process(&mut ctx, inputs)?;
                    self.timings.entry(id.clone()).or_default().push(start.elapsed().as_secs_f64() * 1e6);
                    produced.extend(r);
                }
                if flush {
                    produced.extend(node.finish(&mut ctx)?);
                }
                for v in produced {
                    self.route(id, v);
                }
                Ok(())
            })();
            self.nodes.insert(id.clone(), node);
            result.map_err(|m| runtime_err(id, m))?;
        }
        Ok(out)
    }

    /// Validates and applies a parameter change to a running node.
    pub fn set_param(&mut self, node: &str, param: &str, value: &Json) -> FlowResult<()> {
        let bad = |message: String| FlowError::Node { source_path: self.graph.source_path.clone(), node: node.into(), message };
        let spec = self.graph.specs.get(node).ok_or_else(|| FlowError::Session(format!("unknown node '{node}'")))?;
        let ps = spec.param(param).ok_or_else(|| bad(format!("unknown param '{param}' for {}", spec.kind)))?;
        if !ps.tunable {
            return Err(bad(format!("param '{param}' is not tunable")));
        }
        ps.ty.check(value).map_err(|e| bad(format!("param '{param}': {e}")))?;
        self.nodes.get_mut(node).expect("node").set_param(param, value).map_err(bad)?;
        if let Some(n) = self.graph.doc.node_mut(node) {
            n.params.insert(param.into(), value.clone());
        }
        Ok(())
    }

    pub fn take_outputs(&mut self) -> BTreeMap<String, SinkOutput> {
        self.nodes.iter_mut().filter_map(|(id, n)| n.take_output().map(|o| (id.clone(), o))).collect()
    }

    pub fn reports(&self) -> BTreeMap<String, Json> {
        self.nodes.iter().filter_map(|(id, n)| n.report().map(|r| (id.clone(), r))).collect()
    }

    pub fn latencies(&self) -> BTreeMap<String, Latency> {
        self.graph.order.iter().map(|id| (id.clone(), Latency::of(self.timings.get(id).map_or(&[][..], Vec::as_slice)))).collect()
    }
}

/// The recording a source node produces when nothing is supplied.
pub fn source_recording(graph: &FlowGraph, id: &str) -> FlowResult<Recording> {
    let n = graph.doc.node(id).ok_or_else(|| FlowError::Session(format!("unknown node '{id}'")))?;
    let spec = graph.spec(id);
    load_source(spec.kind, &Params::new(spec, &n.params)).map_err(|message| FlowError::Node {
        source_path: graph.source_path.clone(),
        node: id.into(),
        message,
    })
}

/// Frames a source would send when streamed, using its `samples_per_frame`.
pub fn source_frames(graph: &FlowGraph, id: &str) -> FlowResult<Vec<WireFrame>> {
    let rec = source_recording(graph, id)?;
    let n = graph.doc.node(id).expect("checked");
    let spf = n.params.get("samples_per_frame").and_then(Json::as_u64).unwrap_or(32) as usize;
    Ok(recording_to_frames(&rec.block, &rec.markers, &rec.subject_tag, spf))
}

#[derive(Debug, Clone, Default)]
pub struct OfflineResult {
    pub sinks: BTreeMap<String, SinkOutput>,
    pub reports: BTreeMap<String, Json>,
    pub emitted: Emitted,
}

impl OfflineResult {
    /// Decisions in emission order across all decision sinks.
    pub fn decisions(&self) -> Vec<crate::value::Decision> {
        self.emitted
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Decision(d) => Some(d.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Runs the whole graph on complete recordings. `input` replaces the data of
/// every non-synthetic source.
pub fn run_offline(graph: &FlowGraph, input: Option<&Recording>) -> FlowResult<OfflineResult> {
    let sources = graph.sources();
    if sources.is_empty() {
        return Err(FlowError::Session("pipeline has no source node".into()));
    }
    if graph.sinks().is_empty() {
        return Err(FlowError::Session("pipeline has no sink node".into()));
    }
    let mut inject = Vec::new();
    let mut t0 = f64::INFINITY;
    for id in sources {
        let rec = match input {
            Some(r) if graph.spec(id).kind != "source.synth" => r.clone(),
            _ => source_recording(graph, id)?,
        };
        t0 = t0.min(rec.block.t0);
        inject.push((id.to_string(), Value::Raw(recording_chunk(&rec))));
    }
    let mut rt = Runtime::new(graph, Mode::Offline, "offline")?;
    let mut emitted = rt.tick(inject, t0, false)?;
    emitted.extend(rt.tick(Vec::new(), t0, true)?);
    Ok(OfflineResult { sinks: rt.take_outputs(), reports: rt.reports(), emitted })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Latency {
    pub count: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
}

impl Latency {
    /// Nearest-rank percentiles.
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self { count: s.len(), p50_us: rank(0.5), p95_us: rank(0.95), max_us: s[s.len() - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamAck {
    pub node: String,
    pub param: String,
    pub value: Json,
    /// Index of the first data frame processed with the new value.
    pub applied_frame_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub session: String,
    pub frames_in: u64,
    pub frames_consumed: u64,
    pub data_frames: u64,
    pub marker_frames: u64,
    pub samples_in: u64,
    pub malformed: u64,
    pub malformed_reasons: Vec<String>,
    pub ended: bool,
    pub decisions: usize,
    pub plot_frames: u64,
    pub dropped_plot_frames: u64,
    pub param_updates: Vec<ParamAck>,
    pub frame_latency: Latency,
    pub node_latency: BTreeMap<String, Latency>,
}

#[derive(Debug, Clone)]
pub struct StopResult {
    pub summary: Summary,
    pub sinks: BTreeMap<String, SinkOutput>,
    pub reports: BTreeMap<String, Json>,
    /// Side outputs released by the final flush.
    pub emitted: Emitted,
}

/// A live run fed one wire frame at a time.
pub struct OnlineSession {
    rt: Runtime,
    source: String,
    info: Option<StreamInfo>,
    next_index: u64,
    summary: Summary,
    frame_times: Vec<f64>,
}

pub fn start_online(graph: &FlowGraph, session_id: &str) -> FlowResult<OnlineSession> {
    let sources = graph.sources();
    if sources.len() != 1 {
        return Err(FlowError::Session(format!("online runs need exactly one source node, found {}", sources.len())));
    }
    let source = sources[0].to_string();
    let rt = Runtime::new(graph, Mode::Online, session_id)?;
    Ok(OnlineSession {
        rt,
        source,
        info: None,
        next_index: 0,
        summary: Summary {
            session: session_id.into(),
            frames_in: 0,
            frames_consumed: 0,
            data_frames: 0,
            marker_frames: 0,
            samples_in: 0,
            malformed: 0,
            malformed_reasons: Vec::new(),
            ended: false,
            decisions: 0,
            plot_frames: 0,
            dropped_plot_frames: 0,
            param_updates: Vec::new(),
            frame_latency: Latency::default(),
            node_latency: BTreeMap::new(),
        },
        frame_times: Vec::new(),
    })
}

impl OnlineSession {
    pub fn session_id(&self) -> &str {
        &self.summary.session
    }

    pub fn graph(&self) -> &FlowGraph {
        self.rt.graph()
    }

    pub fn data_frames(&self) -> u64 {
        self.summary.data_frames
    }

    fn malformed(&mut self, reason: String) -> FlowResult<Emitted> {
        self.summary.malformed += 1;
        if self.summary.malformed_reasons.len() < MAX_MALFORMED_REASONS {
            self.summary.malformed_reasons.push(reason);
        }
        Ok(Emitted::default())
    }

    fn run(&mut self, chunk: StreamChunk, t0: f64) -> FlowResult<Emitted> {
        let start = Instant::now();
        let out = self.rt.tick(vec![(self.source.clone(), Value::Raw(chunk))], t0, false)?;
        self.frame_times.push(start.elapsed().as_secs_f64() * 1e6);
        self.note(&out);
        Ok(out)
    }

    fn note(&mut self, out: &Emitted) {
        self.summary.decisions += out.events.iter().filter(|e| matches!(e, Event::Decision(_))).count();
        self.summary.plot_frames += out.plots.len() as u64;
    }

    /// Processes one frame. Malformed frames are counted and skipped; node
    /// failures abort with the node id.
    pub fn on_frame(&mut self, frame: WireFrame) -> FlowResult<Emitted> {
        self.summary.frames_in += 1;
        if self.summary.ended {
            return self.malformed(format!("{} frame after end", frame.kind_name()));
        }
        match frame {
            WireFrame::Header(h) => {
                if let Err(e) = h.validate() {
                    return self.malformed(format!("bad header: {e}"));
                }
                let info = StreamInfo { fs: h.fs, channels: h.channels, start_time: h.start_time, subject_tag: h.subject_tag };
                if self.info.as_ref().is_some_and(|i| *i != info) {
                    return self.malformed("second header differs from the first".into());
                }
                self.info = Some(info);
                self.summary.frames_consumed += 1;
                Ok(Emitted::default())
            }
            WireFrame::Data(d) => {
                let Some(info) = self.info.clone() else {
                    return self.malformed("data frame before header".into());
                };
                if d.n_channels as usize != info.channels.len() || d.samples.len() % info.channels.len() != 0 {
                    return self.malformed(format!(
                        "data frame with {} channels / {} values, header has {} channels",
                        d.n_channels,
                        d.samples.len(),
                        info.channels.len()
                    ));
                }
                let c = info.channels.len();
                let n = d.samples.len() / c;
                let samples = (0..c).map(|ch| (0..n).map(|k| f64::from(d.samples[k * c + ch])).collect()).collect();
                let chunk = StreamChunk { info, start_index: self.next_index, samples, markers: Vec::new() };
                self.next_index += n as u64;
                self.summary.samples_in += n as u64;
                self.summary.data_frames += 1;
                self.summary.frames_consumed += 1;
                self.run(chunk, d.t0)
            }
            WireFrame::Marker(m) => {
                let Some(info) = self.info.clone() else {
                    return self.malformed("marker frame before header".into());
                };
                let t = m.t;
                let samples = vec![Vec::new(); info.channels.len()];
                let chunk = StreamChunk { info, start_index: self.next_index, samples, markers: vec![m] };
                self.summary.marker_frames += 1;
                self.summary.frames_consumed += 1;
                self.run(chunk, t)
            }
            WireFrame::End => {
                self.summary.ended = true;
                self.summary.frames_consumed += 1;
                Ok(Emitted::default())
            }
        }
    }

    /// Decodes and processes one encoded frame.
    pub fn on_bytes(&mut self, bytes: &[u8]) -> FlowResult<Emitted> {
        match decode_frame(bytes) {
            Ok(frame) => self.on_frame(frame),
            Err(e) => {
                self.summary.frames_in += 1;
                self.malformed(format!("undecodable frame: {e}"))
            }
        }
    }

    /// Applies a tunable parameter before the next data frame.
    pub fn update_param(&mut self, node: &str, param: &str, value: Json) -> FlowResult<ParamAck> {
        self.rt.set_param(node, param, &value)?;
        let ack = ParamAck { node: node.into(), param: param.into(), value, applied_frame_index: self.summary.data_frames };
        self.summary.param_updates.push(ack.clone());
        Ok(ack)
    }

    /// Current counters without stopping.
    pub fn snapshot(&self) -> Summary {
        let mut s = self.summary.clone();
        s.frame_latency = Latency::of(&self.frame_times);
        s.node_latency = self.rt.latencies();
        s
    }

    /// Flushes every node and returns the run summary and sink outputs.
    pub fn stop(mut self) -> FlowResult<StopResult> {
        let t0 = self.info.as_ref().map_or(0.0, |i| i.start_time + self.next_index as f64 / i.fs);
        let emitted = if self.info.is_some() { self.rt.tick(Vec::new(), t0, true)? } else { Emitted::default() };
        self.note(&emitted);
        let summary = self.snapshot();
        Ok(StopResult { summary, sinks: self.rt.take_outputs(), reports: self.rt.reports(), emitted })
    }
}

/// Stream order helper: every frame of `frames` through a fresh session.
pub fn run_frames(graph: &FlowGraph, session_id: &str, frames: Vec<WireFrame>) -> FlowResult<(Emitted, StopResult)> {
    let mut s = start_online(graph, session_id)?;
    let mut all = Emitted::default();
    for f in frames {
        all.extend(s.on_frame(f)?);
    }
    let stop = s.stop()?;
    all.extend(stop.emitted.clone());
    Ok((all, stop))
}
