//! Session registry: descriptors, lifecycle transitions and the feeder
//! threads that push frames into running engines.

use std::collections::BTreeMap;
use std::io::Read;
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use noetic_core::io::wire::{MAX_FRAME_LEN, PREFIX_LEN};
use noetic_core::io::{read_recording, recording_to_frames, synth_recording, SynthSpec, WireFrame};
use noetic_core::io::csv_import::read_csv_file;
use noetic_flow::{
    spawn_online, start_online, validate_graph, EngineHandle, FlowError, FlowGraph, ParamAck, PipelineDoc, PlotBus, Summary,
};

pub const DEFAULT_SAMPLES_PER_FRAME: usize = 32;
const COMMAND_CAPACITY: usize = 256;
const TCP_POLL: Duration = Duration::from_millis(100);

/// Where a session's frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    File {
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fs: Option<f64>,
    },
    Tcp {
        endpoint: String,
    },
    Synth {
        spec: SynthSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Running,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub id: String,
    pub pipeline_id: String,
    pub pipeline_hash: String,
    pub source: SourceSpec,
    pub state: SessionState,
    /// Seconds since the Unix epoch at start.
    pub started_at: Option<f64>,
    /// Playback speed for file and synth sources; 0 sends as fast as possible.
    pub pace: f64,
    pub samples_per_frame: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub pipeline_id: String,
    #[serde(default)]
    pub source: Option<SourceSpec>,
    #[serde(default)]
    pub pace: f64,
    #[serde(default)]
    pub samples_per_frame: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub descriptor: SessionDescriptor,
    pub summary: Option<Summary>,
    /// Frames handed to the engine so far.
    pub frames_sent: u64,
    pub feeder_done: bool,
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session '{0}' not found")]
    NotFound(String),
    #[error("session '{id}' is {state:?}; cannot {action}")]
    Conflict { id: String, state: SessionState, action: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Default)]
struct FeedStatus {
    sent: u64,
    done: bool,
    error: Option<String>,
}

struct Running {
    handle: Arc<EngineHandle>,
    stop: Arc<AtomicBool>,
    feeder: JoinHandle<()>,
}

struct Entry {
    desc: SessionDescriptor,
    graph: FlowGraph,
    bus: PlotBus,
    running: Option<Running>,
    stopping: bool,
    feed: Arc<Mutex<FeedStatus>>,
    summary: Option<Summary>,
    error: Option<String>,
}

/// Thread-safe registry of sessions. Lifecycle changes for one session are
/// serialized; engines are reached only through their command queues.
#[derive(Default)]
pub struct Registry {
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    next: u64,
    sessions: BTreeMap<String, Entry>,
}

fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// The source a pipeline names for itself, when it has exactly one.
pub fn default_source(graph: &FlowGraph) -> Result<(SourceSpec, Option<usize>), SessionError> {
    let sources = graph.sources();
    let [id] = sources.as_slice() else {
        return Err(SessionError::Invalid(format!("online pipelines need exactly one source, found {}", sources.len())));
    };
    let node = graph.doc.node(id).expect("source exists");
    let spf = node.params.get("samples_per_frame").and_then(Json::as_u64).map(|v| v as usize);
    let text = |k: &str| node.params.get(k).and_then(Json::as_str).map(str::to_string);
    let spec = match node.kind.as_str() {
        "source.replay" => SourceSpec::File {
            path: text("path").ok_or_else(|| SessionError::Invalid(format!("source '{id}' has no path")))?,
            fs: node.params.get("fs").and_then(Json::as_f64),
        },
        "source.stream" => SourceSpec::Tcp {
            endpoint: text("endpoint")
                .ok_or_else(|| SessionError::Invalid(format!("source '{id}' has no endpoint; pass a source")))?,
        },
        "source.synth" => SourceSpec::Synth {
            spec: serde_json::from_value(node.params.get("spec").cloned().unwrap_or(Json::Null))
                .map_err(|e| SessionError::Invalid(format!("source '{id}': bad synth spec: {e}")))?,
        },
        other => return Err(SessionError::Invalid(format!("unsupported source kind {other}"))),
    };
    Ok((spec, spf))
}

fn load_frames(source: &SourceSpec, spf: usize) -> Result<Vec<WireFrame>, String> {
    let (block, markers, tag) = match source {
        SourceSpec::File { path, fs } => {
            if path.ends_with(".csv") {
                let fs = fs.ok_or_else(|| format!("{path}: CSV sources need fs"))?;
                (read_csv_file(path.as_ref(), fs).map_err(|e| format!("{path}: {e}"))?, Vec::new(), String::new())
            } else {
                let r = read_recording(path.as_ref()).map_err(|e| format!("{path}: {e}"))?;
                (r.block, r.markers, r.subject_tag)
            }
        }
        SourceSpec::Synth { spec } => {
            let (b, m) = synth_recording(spec).map_err(|e| e.to_string())?;
            (b, m, format!("synth-{}", spec.seed))
        }
        SourceSpec::Tcp { .. } => unreachable!("tcp sources stream"),
    };
    Ok(recording_to_frames(&block, &markers, &tag, spf))
}

fn feed_frames(frames: Vec<WireFrame>, pace: f64, handle: &EngineHandle, stop: &AtomicBool, status: &Mutex<FeedStatus>) -> Result<(), String> {
    let start = Instant::now();
    let mut elapsed_s = 0.0;
    let mut fs = 0.0;
    for f in frames {
        if stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        match &f {
            WireFrame::Header(h) => fs = h.fs,
            WireFrame::Data(d) if pace > 0.0 && fs > 0.0 => {
                let due = Duration::from_secs_f64(elapsed_s / pace);
                while let Some(wait) = due.checked_sub(start.elapsed()) {
                    if stop.load(Ordering::Relaxed) {
                        return Ok(());
                    }
                    std::thread::sleep(wait.min(Duration::from_millis(50)));
                }
                elapsed_s += d.n_samples() as f64 / fs;
            }
            _ => {}
        }
        handle.send(f).map_err(|e| e.to_string())?;
        status.lock().expect("feed lock").sent += 1;
        while handle.events().try_recv().is_ok() {}
    }
    Ok(())
}

fn feed_tcp(endpoint: &str, handle: &EngineHandle, stop: &AtomicBool, status: &Mutex<FeedStatus>) -> Result<(), String> {
    let mut stream = TcpStream::connect(endpoint).map_err(|e| format!("cannot connect to {endpoint}: {e}"))?;
    stream.set_read_timeout(Some(TCP_POLL)).map_err(|e| e.to_string())?;
    let mut buf: Vec<u8> = Vec::new();
    let mut chunk = [0u8; 64 * 1024];
    loop {
        while buf.len() >= PREFIX_LEN {
            let len = u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
            if len == 0 || len > MAX_FRAME_LEN {
                return Err(format!("{endpoint}: bad length prefix {len}; stream out of sync"));
            }
            if buf.len() < PREFIX_LEN + len {
                break;
            }
            let frame: Vec<u8> = buf.drain(..PREFIX_LEN + len).collect();
            handle.send_bytes(frame).map_err(|e| e.to_string())?;
            status.lock().expect("feed lock").sent += 1;
            while handle.events().try_recv().is_ok() {}
        }
        if stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        match stream.read(&mut chunk) {
            Ok(0) => return Ok(()),
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(format!("{endpoint}: {e}")),
        }
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates the graph for online use and registers a session in the
    /// `created` state.
    pub fn create(&self, pipeline_id: &str, hash: &str, doc: &PipelineDoc, req: &CreateRequest) -> Result<SessionDescriptor, SessionError> {
        if !(req.pace.is_finite() && req.pace >= 0.0) {
            return Err(SessionError::Invalid(format!("pace must be >= 0, got {}", req.pace)));
        }
        let graph = validate_graph(doc, pipeline_id)?;
        drop(start_online(&graph, "validate")?);
        let (source, spf) = match &req.source {
            Some(s) => (s.clone(), default_source(&graph).ok().and_then(|(_, spf)| spf)),
            None => default_source(&graph)?,
        };
        let samples_per_frame = req.samples_per_frame.or(spf).unwrap_or(DEFAULT_SAMPLES_PER_FRAME);
        if samples_per_frame == 0 {
            return Err(SessionError::Invalid("samples_per_frame must be >= 1".into()));
        }
        let mut inner = self.inner.lock().expect("registry lock");
        inner.next += 1;
        let id = format!("s{}", inner.next);
        let desc = SessionDescriptor {
            id: id.clone(),
            pipeline_id: pipeline_id.into(),
            pipeline_hash: hash.into(),
            source,
            state: SessionState::Created,
            started_at: None,
            pace: req.pace,
            samples_per_frame,
        };
        inner.sessions.insert(
            id,
            Entry {
                desc: desc.clone(),
                graph,
                bus: PlotBus::new(),
                running: None,
                stopping: false,
                feed: Arc::default(),
                summary: None,
                error: None,
            },
        );
        Ok(desc)
    }

    /// The plot bus of a session, for subscribers. Fails once stopped.
    pub fn bus(&self, id: &str) -> Result<PlotBus, SessionError> {
        let inner = self.inner.lock().expect("registry lock");
        let e = inner.sessions.get(id).ok_or_else(|| SessionError::NotFound(id.into()))?;
        if e.desc.state == SessionState::Stopped {
            return Err(SessionError::Conflict { id: id.into(), state: e.desc.state, action: "subscribe" });
        }
        Ok(e.bus.clone())
    }

    pub fn start(&self, id: &str) -> Result<SessionDescriptor, SessionError> {
        let mut inner = self.inner.lock().expect("registry lock");
        let e = inner.sessions.get_mut(id).ok_or_else(|| SessionError::NotFound(id.into()))?;
        if e.desc.state != SessionState::Created {
            return Err(SessionError::Conflict { id: id.into(), state: e.desc.state, action: "start" });
        }
        let frames = match &e.desc.source {
            SourceSpec::Tcp { .. } => None,
            other => Some(load_frames(other, e.desc.samples_per_frame).map_err(SessionError::Invalid)?),
        };
        let handle = Arc::new(spawn_online(&e.graph, id, e.bus.clone(), COMMAND_CAPACITY)?);
        let stop = Arc::new(AtomicBool::new(false));
        let feeder = {
            let (handle, stop, status) = (handle.clone(), stop.clone(), e.feed.clone());
            let (source, pace) = (e.desc.source.clone(), e.desc.pace);
            std::thread::Builder::new()
                .name(format!("feed-{id}"))
                .spawn(move || {
                    let r = match (frames, &source) {
                        (Some(frames), _) => feed_frames(frames, pace, &handle, &stop, &status),
                        (None, SourceSpec::Tcp { endpoint }) => feed_tcp(endpoint, &handle, &stop, &status),
                        (None, _) => Ok(()),
                    };
                    let mut s = status.lock().expect("feed lock");
                    s.done = true;
                    s.error = r.err();
                })
                .map_err(|e| SessionError::Invalid(format!("cannot start feeder: {e}")))?
        };
        e.running = Some(Running { handle, stop, feeder });
        e.desc.state = SessionState::Running;
        e.desc.started_at = Some(now_unix());
        Ok(e.desc.clone())
    }

    /// Stops feeding, flushes the engine and returns the final view.
    pub fn stop(&self, id: &str) -> Result<SessionView, SessionError> {
        let running = {
            let mut inner = self.inner.lock().expect("registry lock");
            let e = inner.sessions.get_mut(id).ok_or_else(|| SessionError::NotFound(id.into()))?;
            match e.running.take() {
                Some(r) if !e.stopping => {
                    e.stopping = true;
                    r
                }
                other => {
                    e.running = other;
                    let state = if e.stopping { SessionState::Stopped } else { e.desc.state };
                    return Err(SessionError::Conflict { id: id.into(), state, action: "stop" });
                }
            }
        };
        running.stop.store(true, Ordering::Relaxed);
        let _ = running.feeder.join();
        // get and update_param hold clones only for the length of one call
        let mut shared = running.handle;
        let result = loop {
            match Arc::try_unwrap(shared) {
                Ok(h) => break h.stop(),
                Err(h) => {
                    shared = h;
                    std::thread::sleep(Duration::from_millis(1));
                }
            }
        };
        let mut inner = self.inner.lock().expect("registry lock");
        let e = inner.sessions.get_mut(id).expect("session exists");
        e.stopping = false;
        e.desc.state = SessionState::Stopped;
        match result {
            Ok(r) => e.summary = Some(r.summary),
            Err(err) => e.error = Some(err.to_string()),
        }
        Ok(view(e))
    }

    pub fn update_param(&self, id: &str, node: &str, param: &str, value: Json) -> Result<ParamAck, SessionError> {
        let handle = {
            let inner = self.inner.lock().expect("registry lock");
            let e = inner.sessions.get(id).ok_or_else(|| SessionError::NotFound(id.into()))?;
            match (&e.running, e.stopping) {
                (Some(r), false) => r.handle.clone(),
                _ => {
                    return Err(SessionError::Conflict {
                        id: id.into(),
                        state: e.desc.state,
                        action: "update parameters",
                    })
                }
            }
        };
        Ok(handle.update_param(node, param, value)?)
    }

    pub fn get(&self, id: &str) -> Result<SessionView, SessionError> {
        let handle = {
            let inner = self.inner.lock().expect("registry lock");
            let e = inner.sessions.get(id).ok_or_else(|| SessionError::NotFound(id.into()))?;
            match &e.running {
                Some(r) => r.handle.clone(),
                None => return Ok(view(e)),
            }
        };
        let live = handle.snapshot().ok();
        let inner = self.inner.lock().expect("registry lock");
        let e = inner.sessions.get(id).expect("session exists");
        let mut v = view(e);
        if v.summary.is_none() {
            v.summary = live;
        }
        Ok(v)
    }

    pub fn list(&self) -> Vec<SessionDescriptor> {
        self.inner.lock().expect("registry lock").sessions.values().map(|e| e.desc.clone()).collect()
    }

    /// Stops every running session; used on shutdown.
    pub fn stop_all(&self) {
        let ids: Vec<String> = self
            .inner
            .lock()
            .expect("registry lock")
            .sessions
            .iter()
            .filter(|(_, e)| e.running.is_some())
            .map(|(id, _)| id.clone())
            .collect();
        for id in ids {
            let _ = self.stop(&id);
        }
    }
}

fn view(e: &Entry) -> SessionView {
    let feed = e.feed.lock().expect("feed lock");
    SessionView {
        descriptor: e.desc.clone(),
        summary: e.summary.clone(),
        frames_sent: feed.sent,
        feeder_done: feed.done,
        error: e.error.clone().or_else(|| feed.error.clone()),
    }
}
