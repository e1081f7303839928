mod common;

use std::io::Write;
use std::net::TcpListener;

use axum::http::{Method, StatusCode};
use serde_json::{json, Value};

use common::{plot_doc, stream_doc, wait_for, write_noise, Fixture};
use noetic_core::io::{encode_frame, read_recording, recording_to_frames, WireFrame};
use noetic_flow::{catalog, load_graph, run_offline, SinkOutput};

#[tokio::test]
async fn nodes_lists_every_kind() {
    let fx = Fixture::new();
    let (status, v) = fx.get("/nodes").await;
    assert_eq!(status, StatusCode::OK);
    let kinds: Vec<&str> = v.as_array().unwrap().iter().map(|n| n["kind"].as_str().unwrap()).collect();
    let expected: Vec<&str> = catalog().iter().map(|n| n.kind).collect();
    assert_eq!(kinds, expected);
}

#[tokio::test]
async fn pipelines_round_trip_with_hash() {
    let fx = Fixture::new();
    let doc = plot_doc(&fx.path("rec.neeg"), 16, 64);
    let (status, put) = fx.put_pipeline("demo", &doc).await;
    assert_eq!(status, StatusCode::OK, "{put}");
    let hash = put["hash"].as_str().unwrap().to_string();
    assert_eq!(put["id"], "demo");

    let (again, put2) = fx.put_pipeline("copy", &doc).await;
    assert_eq!((again, put2["hash"].as_str().unwrap()), (StatusCode::OK, hash.as_str()));

    let (status, got) = fx.get("/pipelines/demo").await;
    assert_eq!(status, StatusCode::OK);
    let (_, got_again) = fx.get("/pipelines/demo").await;
    assert_eq!(got, got_again);
    assert_eq!(got["nodes"].as_array().unwrap().len(), 4);
    assert_eq!(noetic_flow::content_hash(&serde_json::from_value(got).unwrap()), hash);

    let (_, list) = fx.get("/pipelines").await;
    assert_eq!(list, json!(["copy", "demo"]));
    assert_eq!(fx.get("/pipelines/missing").await.0, StatusCode::NOT_FOUND);
    assert_eq!(fx.put_pipeline(".hidden", &doc).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn etag_carries_the_content_hash() {
    use axum::body::Body;
    use axum::http::Request;
    use tower::ServiceExt;

    let fx = Fixture::new();
    let (_, put) = fx.put_pipeline("demo", &plot_doc(&fx.path("rec.neeg"), 16, 64)).await;
    let resp = fx.app().oneshot(Request::get("/pipelines/demo").body(Body::empty()).unwrap()).await.unwrap();
    let etag = resp.headers()["etag"].to_str().unwrap();
    assert_eq!(etag, format!("\"{}\"", put["hash"].as_str().unwrap()));
}

#[tokio::test]
async fn cyclic_doc_is_rejected_with_the_cycle() {
    let fx = Fixture::new();
    let doc = json!({
        "version": 1, "seed": 0,
        "nodes": [
            {"id": "src", "kind": "source.stream", "params": {}},
            {"id": "a", "kind": "ref.car", "params": {}},
            {"id": "b", "kind": "ref.car", "params": {}},
            {"id": "p", "kind": "sink.plot", "params": {"kind": "raw", "window_samples": 64}}
        ],
        "edges": [
            {"from": "src", "to": "p"},
            {"from": "a", "to": "b"},
            {"from": "b", "to": "a"}
        ]
    });
    let (status, v) = fx.put_pipeline("loop", &doc).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let mut cycle: Vec<&str> = v["cycle"].as_array().expect("cycle listed").iter().map(|n| n.as_str().unwrap()).collect();
    cycle.sort();
    cycle.dedup();
    assert_eq!(cycle, vec!["a", "b"]);
    assert_eq!(fx.get("/pipelines/loop").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn validation_errors_name_the_node() {
    let fx = Fixture::new();
    let doc = json!({
        "version": 1, "seed": 0,
        "nodes": [
            {"id": "src", "kind": "source.stream", "params": {}},
            {"id": "bad", "kind": "filt.butter", "params": {"kind": "lowpass", "order": 4, "cutoffs": [30.0], "bogus": 1}},
            {"id": "p", "kind": "sink.plot", "params": {"kind": "raw", "window_samples": 64}}
        ],
        "edges": [{"from": "src", "to": "bad"}, {"from": "bad", "to": "p"}]
    });
    let (status, v) = fx.put_pipeline("x", &doc).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["node"], "bad", "{v}");

    let (status, v) = fx.call(Method::PUT, "/pipelines/y", Some("{ not json".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("pipelines/y"), "{v}");
}

#[tokio::test]
async fn create_checks_online_rules_eagerly() {
    let fx = Fixture::new();
    let doc = json!({
        "version": 1, "seed": 0,
        "nodes": [
            {"id": "src", "kind": "source.stream", "params": {"endpoint": "127.0.0.1:9"}},
            {"id": "zp", "kind": "filt.butter", "params": {"kind": "lowpass", "order": 2, "cutoffs": [30.0], "zero_phase": true}},
            {"id": "p", "kind": "sink.plot", "params": {"kind": "raw", "window_samples": 64}}
        ],
        "edges": [{"from": "src", "to": "zp"}, {"from": "zp", "to": "p"}]
    });
    assert_eq!(fx.put_pipeline("zp", &doc).await.0, StatusCode::OK);
    let (status, v) = fx.post("/sessions", json!({ "pipeline_id": "zp" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["node"], "zp");

    let (status, _) = fx.post("/sessions", json!({ "pipeline_id": "nope" })).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = fx.post("/sessions", json!({ "pipeline": "zp" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(fx.get("/sessions").await.1, json!([]));
}

#[tokio::test]
async fn lifecycle_transitions_and_status_codes() {
    let fx = Fixture::new();
    let rec = fx.path("rec.neeg");
    write_noise(&rec, 2.0, 250.0, 4, 1);
    fx.put_pipeline("demo", &plot_doc(&rec, 25, 50)).await;

    assert_eq!(fx.post("/sessions/s1/start", json!({})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(fx.get("/sessions/s1").await.0, StatusCode::NOT_FOUND);

    let (status, d) = fx.post("/sessions", json!({ "pipeline_id": "demo" })).await;
    assert_eq!(status, StatusCode::CREATED, "{d}");
    assert_eq!((d["id"].as_str(), d["state"].as_str()), (Some("s1"), Some("created")));
    assert_eq!(d["source"], json!({ "type": "file", "path": rec.to_str().unwrap() }));
    assert_eq!(d["samples_per_frame"], 25);
    assert_eq!(d["started_at"], Value::Null);

    assert_eq!(fx.post("/sessions/s1/stop", json!({})).await.0, StatusCode::CONFLICT);
    let p = json!({ "node": "lp", "param": "cutoffs", "value": [20.0] });
    assert_eq!(fx.post("/sessions/s1/params", p.clone()).await.0, StatusCode::CONFLICT);

    let (status, started) = fx.post("/sessions/s1/start", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(started["state"], "running");
    assert!(started["started_at"].as_f64().unwrap() > 0.0);
    let (status, v) = fx.post("/sessions/s1/start", json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");

    wait_for(&fx, "s1", |v| v["feeder_done"] == true).await;
    let (status, stopped) = fx.post("/sessions/s1/stop", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stopped["state"], "stopped");
    assert_eq!(fx.post("/sessions/s1/stop", json!({})).await.0, StatusCode::CONFLICT);
    assert_eq!(fx.post("/sessions/s1/start", json!({})).await.0, StatusCode::CONFLICT);
    assert_eq!(fx.post("/sessions/s1/params", p).await.0, StatusCode::CONFLICT);

    let (_, again) = fx.get("/sessions/s1").await;
    assert_eq!(again, stopped);
    let (_, list) = fx.get("/sessions").await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["state"], "stopped");
}

#[tokio::test]
async fn completed_replay_matches_offline_run() {
    let fx = Fixture::new();
    let rec = fx.path("rec.neeg");
    write_noise(&rec, 3.0, 250.0, 4, 2);
    let doc = plot_doc(&rec, 20, 50);
    fx.put_pipeline("demo", &doc).await;
    fx.post("/sessions", json!({ "pipeline_id": "demo" })).await;
    fx.post("/sessions/s1/start", json!({})).await;
    wait_for(&fx, "s1", |v| v["feeder_done"] == true).await;
    let (_, v) = fx.post("/sessions/s1/stop", json!({})).await;

    let r = read_recording(&rec).unwrap();
    let frames = recording_to_frames(&r.block, &r.markers, &r.subject_tag, 20);
    let s = &v["summary"];
    assert_eq!(v["frames_sent"], frames.len());
    assert_eq!(s["frames_in"], frames.len());
    assert_eq!(s["samples_in"], 750);
    assert_eq!(s["ended"], true);
    assert_eq!(s["malformed"], 0);

    let offline = run_offline(&load_graph(&doc.to_string(), "demo").unwrap(), None).unwrap();
    let plots: usize = offline
        .sinks
        .values()
        .map(|o| match o {
            SinkOutput::Plot { frames } => frames.len(),
            _ => 0,
        })
        .sum();
    assert_eq!(s["plot_frames"], plots);
}

#[tokio::test]
async fn stop_mid_stream_counts_exactly_the_frames_sent() {
    let fx = Fixture::new();
    let rec = fx.path("rec.neeg");
    write_noise(&rec, 60.0, 250.0, 4, 3);
    fx.put_pipeline("demo", &plot_doc(&rec, 25, 50)).await;
    fx.post("/sessions", json!({ "pipeline_id": "demo", "pace": 4.0 })).await;
    fx.post("/sessions/s1/start", json!({})).await;
    wait_for(&fx, "s1", |v| v["frames_sent"].as_u64().unwrap() >= 10).await;
    let (status, v) = fx.post("/sessions/s1/stop", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    let sent = v["frames_sent"].as_u64().unwrap();
    assert!(sent < 600, "pace 4 should not finish 60 s in this time, sent {sent}");
    assert_eq!(v["summary"]["frames_in"], sent);
    assert_eq!(v["summary"]["frames_consumed"], sent);
    assert_eq!(v["feeder_done"], true);
}

/// Drives a TCP-sourced session frame by frame.
#[tokio::test]
async fn scripted_tcp_session_acks_params_at_the_frame_sent() {
    let fx = Fixture::new();
    fx.put_pipeline("live", &stream_doc()).await;
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = listener.local_addr().unwrap().to_string();
    let (status, d) =
        fx.post("/sessions", json!({ "pipeline_id": "live", "source": { "type": "tcp", "endpoint": endpoint } })).await;
    assert_eq!(status, StatusCode::CREATED, "{d}");
    fx.post("/sessions/s1/start", json!({})).await;
    let (mut conn, _) = listener.accept().unwrap();

    let spec = common::noise_spec(4.0, 250.0, 3, 5);
    let (block, markers) = noetic_core::io::synth_recording(&spec).unwrap();
    let frames = recording_to_frames(&block, &markers, "live", 10);
    let end = frames.iter().position(|f| matches!(f, WireFrame::End)).unwrap();
    let (first, rest) = frames[..end].split_at(41);
    let data = |fs: &[WireFrame]| fs.iter().filter(|f| matches!(f, WireFrame::Data(_))).count();

    for f in first {
        conn.write_all(&encode_frame(f).unwrap()).unwrap();
    }
    wait_for(&fx, "s1", |v| v["frames_sent"] == first.len()).await;
    let (status, ack) = fx.post("/sessions/s1/params", json!({ "node": "lp", "param": "cutoffs", "value": [20.0] })).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    assert_eq!(ack, json!({ "node": "lp", "param": "cutoffs", "value": [20.0], "applied_frame_index": data(first) }));

    let bad = [
        json!({ "node": "lp", "param": "kind", "value": "highpass" }),
        json!({ "node": "nope", "param": "cutoffs", "value": [20.0] }),
        json!({ "node": "lp", "param": "cutoffs", "value": [500.0] }),
        json!({ "node": "lp", "param": "cutoffs" }),
    ];
    for b in bad {
        let (status, v) = fx.post("/sessions/s1/params", b.clone()).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{b} -> {v}");
    }

    for f in rest {
        conn.write_all(&encode_frame(f).unwrap()).unwrap();
    }
    conn.write_all(&encode_frame(&WireFrame::End).unwrap()).unwrap();
    drop(conn);
    let sent = end + 1;
    wait_for(&fx, "s1", |v| v["feeder_done"] == true).await;
    let (_, v) = fx.post("/sessions/s1/stop", json!({})).await;
    assert_eq!(v["frames_sent"], sent);
    let s = &v["summary"];
    assert_eq!(s["frames_in"], sent);
    assert_eq!(s["data_frames"], data(&frames));
    assert_eq!(s["ended"], true);
    assert_eq!(s["param_updates"].as_array().unwrap().len(), 1);
    assert_eq!(s["param_updates"][0]["applied_frame_index"], data(first));
    assert_eq!(v["error"], Value::Null);
}

#[tokio::test]
async fn garbage_on_the_wire_is_counted_as_malformed() {
    let fx = Fixture::new();
    fx.put_pipeline("live", &stream_doc()).await;
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = listener.local_addr().unwrap().to_string();
    fx.post("/sessions", json!({ "pipeline_id": "live", "source": { "type": "tcp", "endpoint": endpoint } })).await;
    fx.post("/sessions/s1/start", json!({})).await;
    let (mut conn, _) = listener.accept().unwrap();

    let spec = common::noise_spec(1.0, 250.0, 2, 6);
    let (block, markers) = noetic_core::io::synth_recording(&spec).unwrap();
    let frames = recording_to_frames(&block, &markers, "live", 50);
    conn.write_all(&encode_frame(&frames[0]).unwrap()).unwrap();
    // well-framed but with an unknown kind byte
    conn.write_all(&[3, 0, 0, 0, 0xEE, 1, 2]).unwrap();
    for f in &frames[1..] {
        conn.write_all(&encode_frame(f).unwrap()).unwrap();
    }
    drop(conn);
    wait_for(&fx, "s1", |v| v["feeder_done"] == true).await;
    let (_, v) = fx.post("/sessions/s1/stop", json!({})).await;
    let s = &v["summary"];
    assert_eq!(v["frames_sent"], frames.len() + 1);
    assert_eq!(s["malformed"], 1);
    assert_eq!(s["frames_in"], frames.len() + 1);
    assert_eq!(s["frames_consumed"], frames.len());
}

#[tokio::test]
async fn unreachable_tcp_source_is_reported() {
    let fx = Fixture::new();
    fx.put_pipeline("live", &stream_doc()).await;
    let endpoint = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().to_string()
    };
    fx.post("/sessions", json!({ "pipeline_id": "live", "source": { "type": "tcp", "endpoint": endpoint } })).await;
    fx.post("/sessions/s1/start", json!({})).await;
    let v = wait_for(&fx, "s1", |v| v["feeder_done"] == true).await;
    assert!(v["error"].as_str().unwrap().contains(&endpoint), "{v}");
    let (status, v) = fx.post("/sessions/s1/stop", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["summary"]["frames_in"], 0);
}

#[tokio::test]
async fn missing_recording_fails_start() {
    let fx = Fixture::new();
    let rec = fx.path("absent.neeg");
    fx.put_pipeline("demo", &plot_doc(&rec, 25, 50)).await;
    fx.post("/sessions", json!({ "pipeline_id": "demo" })).await;
    let (status, v) = fx.post("/sessions/s1/start", json!({})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("absent.neeg"), "{v}");
    assert_eq!(fx.get("/sessions/s1").await.1["state"], "created");
}

#[tokio::test]
async fn session_descriptors_are_deterministic() {
    let fx = Fixture::new();
    let rec = fx.path("rec.neeg");
    fx.put_pipeline("demo", &plot_doc(&rec, 25, 50)).await;
    let (_, a) = fx.post("/sessions", json!({ "pipeline_id": "demo" })).await;
    let (_, b) = fx.post("/sessions", json!({ "pipeline_id": "demo" })).await;
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("id");
        v
    };
    assert_eq!(b["id"], "s2");
    assert_eq!(strip(a), strip(b));
}
