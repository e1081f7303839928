//! A session on its own thread, fed through a bounded command queue, with
//! plot frames fanned out to subscribers.

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use serde_json::Value as Json;
use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Condvar, Mutex, Weak};
use std::thread::JoinHandle;
use std::time::Duration;

use noetic_core::io::WireFrame;

use crate::engine::{start_online, OnlineSession, ParamAck, StopResult};
use crate::error::{FlowError, FlowResult};
use crate::graph::FlowGraph;
use crate::value::{Event, PlotFrame};

pub const DEFAULT_SUBSCRIBER_CAPACITY: usize = 256;
pub const DEFAULT_COMMAND_CAPACITY: usize = 1024;

struct SubQueue {
    frames: VecDeque<(u64, PlotFrame)>,
    capacity: usize,
    next_seq: u64,
    dropped: u64,
    closed: bool,
}

struct SubShared {
    queue: Mutex<SubQueue>,
    ready: Condvar,
    nodes: Option<BTreeSet<String>>,
}

#[derive(Default)]
struct BusInner {
    subscribers: Vec<Weak<SubShared>>,
    dropped: u64,
    published: u64,
}

/// Fan-out of plot frames. Each subscriber has a bounded queue; when it is
/// full the oldest frame is dropped, so slow readers never block the engine.
#[derive(Clone, Default)]
pub struct PlotBus {
    inner: Arc<Mutex<BusInner>>,
}

/// One subscriber's view of the bus. Frames carry a per-subscriber
/// sequence number, so gaps reveal drops.
pub struct Subscription {
    shared: Arc<SubShared>,
}

impl PlotBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Subscribes to frames from `nodes` (all nodes when `None`).
    pub fn subscribe(&self, nodes: Option<BTreeSet<String>>, capacity: usize) -> Subscription {
        let shared = Arc::new(SubShared {
            queue: Mutex::new(SubQueue {
                frames: VecDeque::new(),
                capacity: capacity.max(1),
                next_seq: 0,
                dropped: 0,
                closed: false,
            }),
            ready: Condvar::new(),
            nodes,
        });
        self.inner.lock().expect("bus lock").subscribers.push(Arc::downgrade(&shared));
        Subscription { shared }
    }

    pub fn publish(&self, frame: &PlotFrame) {
        let mut inner = self.inner.lock().expect("bus lock");
        inner.published += 1;
        inner.subscribers.retain(|w| w.strong_count() > 0);
        let mut dropped = 0;
        for sub in inner.subscribers.iter().filter_map(Weak::upgrade) {
            if sub.nodes.as_ref().is_some_and(|n| !n.contains(&frame.node)) {
                continue;
            }
            let mut q = sub.queue.lock().expect("queue lock");
            if q.closed {
                continue;
            }
            if q.frames.len() == q.capacity {
                q.frames.pop_front();
                q.dropped += 1;
                dropped += 1;
            }
            let seq = q.next_seq;
            q.next_seq += 1;
            q.frames.push_back((seq, frame.clone()));
            sub.ready.notify_all();
        }
        inner.dropped += dropped;
    }

    /// Frames dropped across all subscribers so far.
    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("bus lock").dropped
    }

    pub fn published(&self) -> u64 {
        self.inner.lock().expect("bus lock").published
    }

    /// Wakes every subscriber; later `recv` calls return `None` once drained.
    pub fn close(&self) {
        let inner = self.inner.lock().expect("bus lock");
        for sub in inner.subscribers.iter().filter_map(Weak::upgrade) {
            sub.queue.lock().expect("queue lock").closed = true;
            sub.ready.notify_all();
        }
    }
}

impl Subscription {
    pub fn try_recv(&self) -> Option<(u64, PlotFrame)> {
        self.shared.queue.lock().expect("queue lock").frames.pop_front()
    }

    /// Waits up to `timeout` for a frame. `None` on timeout or when the bus
    /// closed and the queue is empty.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<(u64, PlotFrame)> {
        let q = self.shared.queue.lock().expect("queue lock");
        let (mut q, _) = self
            .shared
            .ready
            .wait_timeout_while(q, timeout, |q| q.frames.is_empty() && !q.closed)
            .expect("queue lock");
        q.frames.pop_front()
    }

    pub fn drain(&self) -> Vec<(u64, PlotFrame)> {
        self.shared.queue.lock().expect("queue lock").frames.drain(..).collect()
    }

    pub fn dropped(&self) -> u64 {
        self.shared.queue.lock().expect("queue lock").dropped
    }

    pub fn is_closed(&self) -> bool {
        let q = self.shared.queue.lock().expect("queue lock");
        q.closed && q.frames.is_empty()
    }
}

enum Command {
    Frame(WireFrame),
    Bytes(Vec<u8>),
    Update { node: String, param: String, value: Json, reply: Sender<FlowResult<ParamAck>> },
    Snapshot(Sender<crate::engine::Summary>),
    Stop(Sender<FlowResult<StopResult>>),
}

/// Handle to a session running on a worker thread. Frames, parameter
/// updates and stop are applied in the order they are sent.
pub struct EngineHandle {
    tx: Sender<Command>,
    events: Receiver<Event>,
    bus: PlotBus,
    worker: Option<JoinHandle<()>>,
}

fn closed() -> FlowError {
    FlowError::Session("session worker has stopped".into())
}

struct Worker {
    session: Option<OnlineSession>,
    failure: Option<FlowError>,
    bus: PlotBus,
    events: Sender<Event>,
}

impl Worker {
    fn deliver(&self, out: crate::nodes::Emitted) {
        for p in &out.plots {
            self.bus.publish(p);
        }
        for e in out.events {
            let _ = self.events.send(e);
        }
    }

    fn feed(&mut self, f: impl FnOnce(&mut OnlineSession) -> FlowResult<crate::nodes::Emitted>) {
        if self.failure.is_some() {
            return;
        }
        let Some(s) = self.session.as_mut() else { return };
        match f(s) {
            Ok(out) => self.deliver(out),
            Err(e) => self.failure = Some(e),
        }
    }

    fn run(mut self, rx: Receiver<Command>) {
        while let Ok(cmd) = rx.recv() {
            match cmd {
                Command::Frame(frame) => self.feed(|s| s.on_frame(frame)),
                Command::Bytes(bytes) => self.feed(|s| s.on_bytes(&bytes)),
                Command::Update { node, param, value, reply } => {
                    let r = match (&self.failure, self.session.as_mut()) {
                        (Some(e), _) => Err(e.clone()),
                        (None, Some(s)) => s.update_param(&node, &param, value),
                        (None, None) => Err(closed()),
                    };
                    let _ = reply.send(r);
                }
                Command::Snapshot(reply) => {
                    if let Some(s) = &self.session {
                        let mut snap = s.snapshot();
                        snap.dropped_plot_frames = self.bus.dropped();
                        let _ = reply.send(snap);
                    }
                }
                Command::Stop(reply) => {
                    let r = match (self.failure.take(), self.session.take()) {
                        (Some(e), _) => Err(e),
                        (None, Some(s)) => s.stop().map(|mut r| {
                            self.deliver(std::mem::take(&mut r.emitted));
                            r.summary.dropped_plot_frames = self.bus.dropped();
                            r
                        }),
                        (None, None) => Err(closed()),
                    };
                    self.bus.close();
                    let _ = reply.send(r);
                    return;
                }
            }
        }
        self.bus.close();
    }
}

/// Starts `graph` online on a worker thread.
pub fn spawn_online(graph: &FlowGraph, session_id: &str, bus: PlotBus, capacity: usize) -> FlowResult<EngineHandle> {
    let session = start_online(graph, session_id)?;
    let (tx, rx) = bounded(capacity.max(1));
    let (etx, erx) = unbounded();
    let worker = Worker { session: Some(session), failure: None, bus: bus.clone(), events: etx };
    let handle = std::thread::Builder::new()
        .name(format!("session-{session_id}"))
        .spawn(move || worker.run(rx))
        .map_err(|e| FlowError::Session(format!("cannot start session thread: {e}")))?;
    Ok(EngineHandle { tx, events: erx, bus, worker: Some(handle) })
}

impl EngineHandle {
    /// Queues a frame, blocking while the queue is full.
    pub fn send(&self, frame: WireFrame) -> FlowResult<()> {
        self.tx.send(Command::Frame(frame)).map_err(|_| closed())
    }

    pub fn send_bytes(&self, bytes: Vec<u8>) -> FlowResult<()> {
        self.tx.send(Command::Bytes(bytes)).map_err(|_| closed())
    }

    /// Applies after every frame already queued; waits for the ack.
    pub fn update_param(&self, node: &str, param: &str, value: Json) -> FlowResult<ParamAck> {
        let (reply, rx) = bounded(1);
        self.tx
            .send(Command::Update { node: node.into(), param: param.into(), value, reply })
            .map_err(|_| closed())?;
        rx.recv().map_err(|_| closed())?
    }

    pub fn snapshot(&self) -> FlowResult<crate::engine::Summary> {
        let (reply, rx) = bounded(1);
        self.tx.send(Command::Snapshot(reply)).map_err(|_| closed())?;
        rx.recv().map_err(|_| closed())
    }

    /// Decisions and simulator events, losslessly, in emission order.
    pub fn events(&self) -> &Receiver<Event> {
        &self.events
    }

    pub fn bus(&self) -> &PlotBus {
        &self.bus
    }

    /// Processes everything queued, flushes and joins the worker.
    pub fn stop(mut self) -> FlowResult<StopResult> {
        let (reply, rx) = bounded(1);
        self.tx.send(Command::Stop(reply)).map_err(|_| closed())?;
        let r = rx.recv().map_err(|_| closed())?;
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
        r
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        if let Some(w) = self.worker.take() {
            let (reply, _rx) = bounded(1);
            let _ = self.tx.send(Command::Stop(reply));
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{PlotKind, PlotPayload};

    fn frame(node: &str, seq: u64) -> PlotFrame {
        PlotFrame {
            session: "s".into(),
            node: node.into(),
            kind: PlotKind::Raw,
            seq,
            t: seq as f64,
            source_t0: 0.0,
            payload: PlotPayload::Decision { class_id: 0, scores: vec![] },
        }
    }

    #[test]
    fn slow_subscriber_drops_oldest() {
        let bus = PlotBus::new();
        let slow = bus.subscribe(None, 4);
        let fast = bus.subscribe(Some(BTreeSet::from(["a".to_string()])), 100);
        for i in 0..10 {
            bus.publish(&frame(if i % 2 == 0 { "a" } else { "b" }, i));
        }
        let got = slow.drain();
        assert_eq!(got.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![6, 7, 8, 9]);
        assert_eq!(slow.dropped(), 6);
        assert_eq!(fast.drain().len(), 5);
        assert_eq!(bus.dropped(), 6);
    }

    #[test]
    fn dropped_subscription_is_forgotten() {
        let bus = PlotBus::new();
        {
            let _gone = bus.subscribe(None, 1);
        }
        bus.publish(&frame("a", 0));
        bus.publish(&frame("a", 1));
        assert_eq!(bus.dropped(), 0);
        let sub = bus.subscribe(None, 1);
        bus.close();
        assert!(sub.recv_timeout(Duration::from_millis(10)).is_none());
        assert!(sub.is_closed());
    }
}
