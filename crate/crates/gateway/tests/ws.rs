mod common;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::Duration;

use futures_util::StreamExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

use common::{plot_doc, wait_for, wait_within, write_noise, Fixture};
use noetic_flow::{load_graph, run_offline, SinkOutput};

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(addr: SocketAddr, path: &str) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}{path}")).await.unwrap();
    ws
}

/// Reads frames until the server closes; returns them with the close code.
async fn read_all(ws: &mut Ws) -> (Vec<Value>, Option<u16>) {
    let mut frames = Vec::new();
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("server went quiet");
        match msg {
            Some(Ok(Message::Text(t))) => frames.push(serde_json::from_str(&t).unwrap()),
            Some(Ok(Message::Close(c))) => return (frames, c.map(|c| u16::from(c.code))),
            Some(Ok(_)) => {}
            None | Some(Err(_)) => return (frames, None),
        }
    }
}

fn seqs_by_node(frames: &[Value]) -> BTreeMap<String, Vec<u64>> {
    let mut m: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for f in frames {
        m.entry(f["node"].as_str().unwrap().to_string()).or_default().push(f["seq"].as_u64().unwrap());
    }
    m
}

fn offline_counts(doc: &Value) -> BTreeMap<String, usize> {
    let r = run_offline(&load_graph(&doc.to_string(), "doc").unwrap(), None).unwrap();
    r.sinks
        .into_iter()
        .filter_map(|(id, s)| match s {
            SinkOutput::Plot { frames } => Some((id, frames.len())),
            _ => None,
        })
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn subscription_filters_by_node_with_increasing_seq() {
    let fx = Fixture::new();
    let rec = fx.path("rec.neeg");
    write_noise(&rec, 4.0, 250.0, 4, 7);
    let doc = plot_doc(&rec, 25, 50);
    fx.put_pipeline("demo", &doc).await;
    fx.post("/sessions", json!({ "pipeline_id": "demo" })).await;
    let addr = fx.serve().await;

    let mut only1 = connect(addr, "/sessions/s1/frames?nodes=plot1&capacity=10000").await;
    let mut all = connect(addr, "/sessions/s1/frames?capacity=10000").await;
    fx.post("/sessions/s1/start", json!({})).await;
    wait_for(&fx, "s1", |v| v["feeder_done"] == true).await;
    let (_, stopped) = fx.post("/sessions/s1/stop", json!({})).await;

    let (f1, code1) = read_all(&mut only1).await;
    let (fa, code_a) = read_all(&mut all).await;
    assert_eq!((code1, code_a), (Some(1000), Some(1000)));

    let expected = offline_counts(&doc);
    assert!(f1.iter().all(|f| f["node"] == "plot1"));
    assert_eq!(f1.len(), expected["plot1"]);
    assert_eq!(fa.len(), expected.values().sum::<usize>());
    assert_eq!(stopped["summary"]["plot_frames"], fa.len());
    assert_eq!(stopped["summary"]["dropped_plot_frames"], 0);

    for frames in [&f1, &fa] {
        for (node, seqs) in seqs_by_node(frames) {
            assert!(seqs.windows(2).all(|w| w[0] < w[1]), "{node}: {seqs:?}");
        }
        let sub: Vec<u64> = frames.iter().map(|f| f["sub_seq"].as_u64().unwrap()).collect();
        assert!(sub.windows(2).all(|w| w[1] == w[0] + 1), "no drops expected: {sub:?}");
        assert!(frames.iter().all(|f| f["session"] == "s1"));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn unknown_and_stopped_sessions_close_with_codes() {
    let fx = Fixture::new();
    let addr = fx.serve().await;
    let mut ws = connect(addr, "/sessions/s9/frames").await;
    let (frames, code) = read_all(&mut ws).await;
    assert!(frames.is_empty());
    assert_eq!(code, Some(noetic_gateway::api::CLOSE_NOT_FOUND));

    let rec = fx.path("rec.neeg");
    write_noise(&rec, 1.0, 250.0, 2, 8);
    fx.put_pipeline("demo", &plot_doc(&rec, 25, 50)).await;
    fx.post("/sessions", json!({ "pipeline_id": "demo" })).await;
    fx.post("/sessions/s1/start", json!({})).await;
    fx.post("/sessions/s1/stop", json!({})).await;
    let mut ws = connect(addr, "/sessions/s1/frames").await;
    assert_eq!(read_all(&mut ws).await.1, Some(noetic_gateway::api::CLOSE_CONFLICT));
}

/// A client that reads nothing until the run is over: the engine finishes
/// regardless, and the client sees gaps in its sequence numbers.
#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn slow_client_sees_gaps_and_never_stalls_the_engine() {
    let fx = Fixture::new();
    let rec = fx.path("big.neeg");
    write_noise(&rec, 60.0, 512.0, 32, 9);
    let doc = plot_doc(&rec, 64, 512);
    fx.put_pipeline("big", &doc).await;
    fx.post("/sessions", json!({ "pipeline_id": "big" })).await;
    let addr = fx.serve().await;

    let mut slow = connect(addr, "/sessions/s1/frames?capacity=4").await;
    fx.post("/sessions/s1/start", json!({})).await;
    let done = wait_for(&fx, "s1", |v| v["feeder_done"] == true).await;
    assert_eq!(done["state"], "running");
    let (_, stopped) = fx.post("/sessions/s1/stop", json!({})).await;

    let (frames, code) = read_all(&mut slow).await;
    assert_eq!(code, Some(1000));
    let total = stopped["summary"]["plot_frames"].as_u64().unwrap();
    let dropped = stopped["summary"]["dropped_plot_frames"].as_u64().unwrap();
    assert_eq!(total as usize, offline_counts(&doc).values().sum::<usize>());
    assert!(dropped > 0, "a stalled client must force drops");
    assert_eq!(frames.len() as u64 + dropped, total);

    let sub: Vec<u64> = frames.iter().map(|f| f["sub_seq"].as_u64().unwrap()).collect();
    assert!(sub.windows(2).all(|w| w[0] < w[1]));
    assert!(sub.windows(2).any(|w| w[1] > w[0] + 1), "gaps expose the drops: {sub:?}");
    for (node, seqs) in seqs_by_node(&frames) {
        assert!(seqs.windows(2).all(|w| w[0] < w[1]), "{node}: {seqs:?}");
    }
    // drop-oldest keeps the newest frames
    assert_eq!(frames.last().unwrap()["sub_seq"].as_u64().unwrap(), total - 1);
}

/// Desk benchmark: 16 channels at 512 Hz through filter, CAR, sliding
/// windows and band power, plus a raw plot, streamed with 32 samples per
/// frame.
fn bench_doc(rec: &std::path::Path) -> Value {
    json!({
        "version": 1, "seed": 3,
        "nodes": [
            {"id": "src", "kind": "source.replay", "params": {"path": rec.to_str().unwrap(), "samples_per_frame": 32}},
            {"id": "bp", "kind": "filt.butter", "params": {"kind": "bandpass", "order": 4, "cutoffs": [1.0, 40.0]}},
            {"id": "car", "kind": "ref.car", "params": {}},
            {"id": "win", "kind": "epoch.sliding", "params": {"window_s": 1.0, "step_s": 0.25}},
            {"id": "pow", "kind": "feature.band_power", "params": {}},
            {"id": "out", "kind": "sink.file", "params": {}},
            {"id": "plot1", "kind": "sink.plot", "params": {"kind": "filtered", "window_samples": 128}}
        ],
        "edges": [
            {"from": "src", "to": "bp"}, {"from": "bp", "to": "car"}, {"from": "car", "to": "win"},
            {"from": "win", "to": "pow"}, {"from": "pow", "to": "out"}, {"from": "car", "to": "plot1"}
        ]
    })
}

/// Playback at twice real time: a live stream leaves the engine idle between
/// frames, and so does this, while the run stays short.
const BENCH_PACE: f64 = 2.0;

async fn bench_p95(fx: &Fixture, addr: SocketAddr, id: &str, subscribers: usize) -> f64 {
    fx.post("/sessions", json!({ "pipeline_id": "bench", "pace": BENCH_PACE })).await;
    let mut clients = Vec::new();
    for _ in 0..subscribers {
        let mut ws = connect(addr, &format!("/sessions/{id}/frames")).await;
        clients.push(tokio::spawn(async move { read_all(&mut ws).await.0.len() }));
    }
    fx.post(&format!("/sessions/{id}/start"), json!({})).await;
    wait_within(fx, id, 60.0, |v| v["feeder_done"] == true).await;
    let (_, v) = fx.post(&format!("/sessions/{id}/stop"), json!({})).await;
    for c in clients {
        assert!(c.await.unwrap() > 0);
    }
    v["summary"]["frame_latency"]["p95_us"].as_f64().unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn subscribers_leave_engine_latency_unchanged() {
    let fx = Fixture::new();
    let rec = fx.path("bench.neeg");
    write_noise(&rec, 20.0, 512.0, 16, 10);
    let (status, v) = fx.put_pipeline("bench", &bench_doc(&rec)).await;
    assert!(status.is_success(), "{v}");
    let addr = fx.serve().await;

    // interleave runs so machine load drifts affect both arms alike
    let (mut none, mut four) = (Vec::new(), Vec::new());
    let mut n = 0;
    for _ in 0..3 {
        n += 1;
        none.push(bench_p95(&fx, addr, &format!("s{n}"), 0).await);
        n += 1;
        four.push(bench_p95(&fx, addr, &format!("s{n}"), 4).await);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (a, b) = (median(&mut none), median(&mut four));
    let ratio = b / a;
    println!("p95 frame latency: {a:.0} us without subscribers, {b:.0} us with 4 (ratio {ratio:.3})");
    assert!((0.8..=1.2).contains(&ratio), "p95 {a} us vs {b} us");
}
