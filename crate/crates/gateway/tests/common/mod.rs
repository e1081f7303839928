#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use noetic_core::io::{synth_recording, write_recording, NoiseSpec, SynthSpec};
use noetic_gateway::api::{router, AppState};
use noetic_gateway::store::Store;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub state: AppState,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("store")).unwrap();
        Self { state: AppState::new(store), dir }
    }

    pub fn app(&self) -> Router {
        router(self.state.clone())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// One request through the router; JSON bodies are parsed, others
    /// returned as strings.
    pub async fn call(&self, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map(Body::from).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = self.app().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| json!(String::from_utf8_lossy(&bytes)));
        (status, v)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body.to_string())).await
    }

    pub async fn put_pipeline(&self, id: &str, doc: &Value) -> (StatusCode, Value) {
        self.call(Method::PUT, &format!("/pipelines/{id}"), Some(doc.to_string())).await
    }

    /// Serves the router on an ephemeral port.
    pub async fn serve(&self) -> SocketAddr {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let app = self.app();
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        addr
    }
}

pub fn noise_spec(duration_s: f64, fs: f64, n_channels: usize, seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::new(duration_s, fs, n_channels, seed);
    spec.noise = NoiseSpec { pink_gain: 2.0, white_gain: 1.0 };
    spec
}

pub fn write_noise(path: &Path, duration_s: f64, fs: f64, n_channels: usize, seed: u64) {
    let (block, markers) = synth_recording(&noise_spec(duration_s, fs, n_channels, seed)).unwrap();
    write_recording(&block, &markers, "fixture", path).unwrap();
}

/// Replay source feeding a raw plot and a lowpass-filtered plot.
pub fn plot_doc(rec: &Path, spf: usize, window: usize) -> Value {
    json!({
        "version": 1,
        "seed": 1,
        "nodes": [
            {"id": "src", "kind": "source.replay", "params": {"path": rec.to_str().unwrap(), "samples_per_frame": spf}},
            {"id": "lp", "kind": "filt.butter", "params": {"kind": "lowpass", "order": 4, "cutoffs": [30.0]}},
            {"id": "plot1", "kind": "sink.plot", "params": {"kind": "raw", "window_samples": window}},
            {"id": "plot2", "kind": "sink.plot", "params": {"kind": "filtered", "window_samples": window}}
        ],
        "edges": [
            {"from": "src", "to": "plot1"},
            {"from": "src", "to": "lp"},
            {"from": "lp", "to": "plot2"}
        ]
    })
}

/// TCP stream source into a lowpass filter and a raw plot.
pub fn stream_doc() -> Value {
    json!({
        "version": 1,
        "seed": 2,
        "nodes": [
            {"id": "src", "kind": "source.stream", "params": {}},
            {"id": "lp", "kind": "filt.butter", "params": {"kind": "lowpass", "order": 2, "cutoffs": [30.0]}},
            {"id": "plot1", "kind": "sink.plot", "params": {"kind": "filtered", "window_samples": 32}}
        ],
        "edges": [
            {"from": "src", "to": "lp"},
            {"from": "lp", "to": "plot1"}
        ]
    })
}

/// Polls `GET /sessions/{id}` until `done` holds or five seconds pass.
pub async fn wait_for(fx: &Fixture, id: &str, done: impl Fn(&Value) -> bool) -> Value {
    wait_within(fx, id, 5.0, done).await
}

pub async fn wait_within(fx: &Fixture, id: &str, secs: f64, done: impl Fn(&Value) -> bool) -> Value {
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs_f64(secs);
    loop {
        let (status, v) = fx.get(&format!("/sessions/{id}")).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        if done(&v) {
            return v;
        }
        assert!(std::time::Instant::now() < deadline, "timed out waiting on session {id}: {v}");
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
}
