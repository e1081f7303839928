use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

use noetic_core::classify::ClassifierModel;
use noetic_core::io::read_recording;
use noetic_core::preprocess::{design_butterworth, DesignSpec, FilterKind};
use noetic_flow::{catalog, load_graph, run_offline, SinkOutput};

fn noetic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noetic")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Two-class ERP recording: class 1 responses on ch2 only.
fn erp_spec(dir: &Path) -> PathBuf {
    let onsets = |class: usize| -> Vec<f64> { (0..40).filter(|k| k % 2 == class).map(|k| 1.0 + 1.2 * k as f64).collect() };
    let spec = json!({
        "duration_s": 52.0, "fs": 250.0, "n_channels": 6, "seed": 4,
        "noise": {"pink_gain": 1.0, "white_gain": 1.0},
        "erp": [
            {"label": "target", "class_id": 1, "latency_s": 0.3, "amplitude_uv": 15.0, "channels": [2], "onsets": onsets(1)},
            {"label": "standard", "class_id": 0, "latency_s": 0.3, "amplitude_uv": 0.5, "channels": [2], "onsets": onsets(0)}
        ]
    });
    let p = dir.join("spec.json");
    std::fs::write(&p, spec.to_string()).unwrap();
    p
}

fn synth(dir: &Path) -> PathBuf {
    let rec = dir.join("rec.neeg");
    let o = noetic(&["synth", "--input", s(&erp_spec(dir)), "--out", s(&rec), "--seed", "11"]);
    let v = stdout_json(&o);
    assert_eq!((v["channels"].as_u64(), v["markers"].as_u64()), (Some(6), Some(40)));
    rec
}

#[test]
fn nodes_lists_every_registered_kind() {
    let o = noetic(&["nodes"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let listed: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    let kinds: Vec<&str> = catalog().iter().map(|n| n.kind).collect();
    assert_eq!(listed, kinds);

    let v = stdout_json(&noetic(&["nodes", "--json"]));
    assert_eq!(v.as_array().unwrap().len(), kinds.len());
}

#[test]
fn every_subcommand_has_help() {
    for cmd in ["synth", "run", "select", "train", "sim", "serve", "nodes", "filter-design"] {
        let o = noetic(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage: noetic"), "{cmd}");
    }
    assert_eq!(noetic(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one_with_usage() {
    for args in [&["nodes", "--bogus"][..], &["frobnicate"], &[], &["select", "--input", "x.neeg", "--method", "magic", "--n", "2"]] {
        let o = noetic(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"), "{args:?}");
    }
}

#[test]
fn missing_inputs_exit_one_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere").join("missing.json");
    let shipped = repo_file("pipelines/filter_view.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["synth", "--input", s(&missing), "--out", "x.neeg"],
        vec!["run", "--pipeline", s(&missing)],
        vec!["run", "--pipeline", s(&shipped), "--input", s(&missing)],
        vec!["select", "--input", s(&missing), "--method", "csp", "--n", "2"],
        vec!["sim", "--input", s(&missing)],
    ];
    for args in cases {
        let o = noetic(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(s(&missing)), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn run_filter_view_writes_sink_files() {
    let dir = tempfile::tempdir().unwrap();
    let rec = synth(dir.path());
    let out = dir.path().join("out");
    let shipped = repo_file("pipelines/filter_view.json");
    let v = stdout_json(&noetic(&["run", "--pipeline", s(&shipped), "--input", s(&rec), "--out", s(&out)]));

    let graph = load_graph(&std::fs::read_to_string(&shipped).unwrap(), "filter_view").unwrap();
    let offline = run_offline(&graph, Some(&read_recording(&rec).unwrap())).unwrap();
    for node in ["plot_raw", "plot_filtered"] {
        let path = out.join(format!("{node}.plot.jsonl"));
        assert_eq!(v["sinks"][node]["path"], s(&path));
        let lines: Vec<Value> =
            std::fs::read_to_string(&path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let SinkOutput::Plot { frames } = &offline.sinks[node] else { panic!("{node} is a plot sink") };
        assert_eq!(lines, frames.iter().map(|f| serde_json::to_value(f).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(v["reports"]["select"]["chosen"], json!([0, 1, 2, 3]));
    let leftovers: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 2, "only the renamed outputs remain: {leftovers:?}");
}

#[test]
fn invalid_pipeline_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"version": 1, "seed": 0, "nodes": [{"id": "a", "kind": "no.such", "params": {}}], "edges": []}"#).unwrap();
    let o = noetic(&["run", "--pipeline", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no.such") && err.contains("bad.json"), "{err}");
}

#[test]
fn select_reports_the_planted_channel() {
    let dir = tempfile::tempdir().unwrap();
    let rec = synth(dir.path());
    for method in ["correlation", "mutual-information", "chi-squared", "csp"] {
        let v = stdout_json(&noetic(&["select", "--input", s(&rec), "--method", method, "--n", "2", "--post-s", "0.8"]));
        assert_eq!(v["chosen"][0], 2, "{method}: {v}");
        assert_eq!(v["scores"].as_array().unwrap().len(), 6);
        assert_eq!(v["chosen_names"][0], "ch2");
    }
    let report = dir.path().join("sel").join("report.json");
    let o = noetic(&["select", "--input", s(&rec), "--method", "csp", "--n", "3", "--out", s(&report)]);
    assert!(o.status.success());
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved["method"], "csp");
    assert_eq!(saved["chosen"].as_array().unwrap().len(), 3);
}

#[test]
fn train_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let rec = synth(dir.path());
    let doc = json!({
        "version": 1, "seed": 5,
        "nodes": [
            {"id": "src", "kind": "source.replay", "params": {"path": s(&rec)}},
            {"id": "ep", "kind": "epoch.markers", "params": {"pre_s": 0.0, "post_s": 0.8}},
            {"id": "feat", "kind": "feature.moments", "params": {}},
            {"id": "nb", "kind": "train.classifier", "params": {"kind": "nb", "folds": 4}},
            {"id": "model", "kind": "sink.file", "params": {}}
        ],
        "edges": [
            {"from": "src", "to": "ep"}, {"from": "ep", "to": "feat"}, {"from": "feat", "to": "nb"}, {"from": "nb", "to": "model"}
        ]
    });
    let p = dir.path().join("train.json");
    std::fs::write(&p, doc.to_string()).unwrap();
    let model = dir.path().join("models").join("nb.json");
    let v = stdout_json(&noetic(&["train", "--pipeline", s(&p), "--out", s(&model)]));
    assert_eq!(v["kind"], "nb");
    assert_eq!(v["reports"]["nb"]["n_train"], 40);
    let m = ClassifierModel::from_json(&std::fs::read_to_string(&model).unwrap()).unwrap();
    m.validate().unwrap();

    let shipped = repo_file("pipelines/filter_view.json");
    let o = noetic(&["train", "--pipeline", s(&shipped), "--input", s(&rec), "--out", s(&model)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn filter_design_prints_the_response() {
    let v = stdout_json(&noetic(&[
        "filter-design", "--kind", "lowpass", "--order", "4", "--cutoffs", "30", "--fs", "250", "--freqs", "1,30,100",
    ]));
    let spec = design_butterworth(FilterKind::Lowpass, &DesignSpec::Order { order: 4, cutoffs: vec![30.0] }, 250.0).unwrap();
    assert_eq!(v["sections"], serde_json::to_value(&spec.sections).unwrap());
    let r = v["response"].as_array().unwrap();
    assert_eq!(r.len(), 3);
    assert!((r[1]["magnitude_db"].as_f64().unwrap() + 10.0 * 2f64.log10()).abs() < 1e-9);
    assert!(r[0]["magnitude_db"].as_f64().unwrap().abs() < 1e-3);
    assert!(r[2]["magnitude_db"].as_f64().unwrap() < -40.0);

    let o = noetic(&["filter-design", "--kind", "lowpass", "--order", "4", "--cutoffs", "300", "--fs", "250"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Nyquist"));
}

#[test]
fn sim_scores_traces_and_simulated_decoders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(
        &cfg,
        json!({"n_obstacles": 4, "inter_obstacle_s": 5.0, "decision_window_s": 2.0, "sequence": {"explicit": [0, 1, 1, 0]}})
            .to_string(),
    )
    .unwrap();
    let perfect = stdout_json(&noetic(&["sim", "--input", s(&cfg), "--accuracy", "1.0"]));
    assert_eq!((perfect["avoided"].as_u64(), perfect["accuracy"].as_f64()), (Some(4), Some(1.0)));

    let trace = dir.path().join("trace.json");
    std::fs::write(&trace, "[[1.0, 0], [6.0, 0], [11.5, 1], [20.0, null]]").unwrap();
    let log = dir.path().join("log.jsonl");
    let v = stdout_json(&noetic(&["sim", "--input", s(&cfg), "--trace", s(&trace), "--out", s(&log)]));
    assert_eq!((v["avoided"].as_u64(), v["hit"].as_u64(), v["timeout"].as_u64()), (Some(2), Some(1), Some(1)));
    let outcomes: Vec<String> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["outcome"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(outcomes, ["avoided", "hit", "avoided", "timeout"]);

    let a = stdout_json(&noetic(&["sim", "--input", s(&cfg), "--accuracy", "0.5", "--seed", "3"]));
    let b = stdout_json(&noetic(&["sim", "--input", s(&cfg), "--accuracy", "0.5", "--seed", "3"]));
    assert_eq!(a, b);
    assert_eq!(noetic(&["sim", "--input", s(&cfg), "--accuracy", "1.5"]).status.code(), Some(1));
}

#[test]
fn serve_answers_http_from_the_env_store() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_noetic"))
        .args(["serve", "--port", "0"])
        .env("NOETIC_DATA_DIR", dir.path().join("data"))
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.split("http://").nth(1).and_then(|r| r.split_whitespace().next()).expect("address printed").to_string();

    let mut conn = std::net::TcpStream::connect(&addr).unwrap();
    write!(conn, "GET /pipelines HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    conn.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.ends_with("[]"), "{resp}");
    assert!(dir.path().join("data").join("objects").is_dir());
}
