#![allow(dead_code)]

use std::path::{Path, PathBuf};

use noetic_core::io::{write_recording, ErpSource, NoiseSpec, Recording, SynthSpec};
use noetic_core::io::synth_recording;
use noetic_flow::{load_graph, FlowGraph, PipelineDoc};
use serde_json::{json, Value};

pub fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Two-class ERP recording: class 0 peaks over ch0-ch1, class 1 over ch2-ch3.
pub fn erp_spec(n_trials: usize, seed: u64) -> SynthSpec {
    let fs = 250.0;
    let soa = 1.5;
    let mut spec = SynthSpec::new(1.0 + soa * n_trials as f64 + 1.0, fs, 8, seed);
    spec.noise = NoiseSpec { pink_gain: 4.0, white_gain: 1.0 };
    let onsets = |class: usize| -> Vec<f64> {
        (0..n_trials).filter(|k| k % 2 == class).map(|k| 1.0 + soa * k as f64).collect()
    };
    spec.erp.push(ErpSource {
        label: "target".into(),
        class_id: Some(0),
        latency_s: 0.3,
        amplitude_uv: 12.0,
        channels: vec![0, 1],
        onsets: onsets(0),
    });
    spec.erp.push(ErpSource {
        label: "target".into(),
        class_id: Some(1),
        latency_s: 0.3,
        amplitude_uv: 12.0,
        channels: vec![2, 3],
        onsets: onsets(1),
    });
    spec
}

pub fn erp_recording(n_trials: usize, seed: u64) -> Recording {
    let (block, markers) = synth_recording(&erp_spec(n_trials, seed)).unwrap();
    Recording { block, markers, subject_tag: format!("synth-{seed}") }
}

pub fn write_rec(dir: &Path, name: &str, rec: &Recording) -> PathBuf {
    let p = dir.join(name);
    write_recording(&rec.block, &rec.markers, &rec.subject_tag, &p).unwrap();
    p
}

pub fn graph(doc: &PipelineDoc) -> FlowGraph {
    noetic_flow::validate_graph(doc, "test.json").unwrap()
}

pub fn load_shipped(name: &str, path: &Path) -> FlowGraph {
    let text = std::fs::read_to_string(repo_file(&format!("pipelines/{name}"))).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    for n in v["nodes"].as_array_mut().unwrap() {
        if n["kind"] == "source.replay" {
            n["params"]["path"] = json!(path.to_str().unwrap());
        }
    }
    load_graph(&v.to_string(), name).unwrap()
}

/// Epoch → band power → NB decision pipeline around a given model.
pub fn decision_doc(source_path: &str, model: Option<Value>) -> PipelineDoc {
    let mut d = PipelineDoc::new(9);
    d.add("src", "source.replay", json!({ "path": source_path, "samples_per_frame": 25 }))
        .add("bp", "filt.butter", json!({ "kind": "bandpass", "order": 2, "cutoffs": [1.0, 12.0] }))
        .add("ep", "epoch.markers", json!({ "pre_s": 0.0, "post_s": 0.8 }))
        .add("feat", "feature.moments", json!({}));
    d.link("src", "bp").link("bp", "ep").link("ep", "feat");
    match model {
        Some(m) => {
            d.add("clf", "classify.nb", json!({ "model": m })).add("dec", "sink.decision", json!({}));
            d.link("feat", "clf").link("clf", "dec");
        }
        None => {
            d.add("train", "train.classifier", json!({ "kind": "nb", "folds": 5 })).add("out", "sink.file", json!({}));
            d.link("feat", "train").link("train", "out");
        }
    }
    d
}
