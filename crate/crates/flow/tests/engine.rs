mod common;

use common::*;
use noetic_core::io::{encode_frame, read_recording, recording_to_frames, DataFrame, WireFrame};
use noetic_flow::{
    run_frames, run_offline, spawn_online, start_online, FlowError, PipelineDoc, PlotBus, PlotPayload, SinkOutput,
};
use proptest::prelude::*;
use serde_json::{json, Value};

fn frames_of(out: &SinkOutput) -> Vec<(u64, f64, PlotPayload)> {
    match out {
        SinkOutput::Plot { frames } => frames.iter().map(|f| (f.seq, f.t, f.payload.clone())).collect(),
        other => panic!("not a plot sink: {other:?}"),
    }
}

fn file_bytes(out: &SinkOutput) -> &[u8] {
    match out {
        SinkOutput::File { bytes, .. } => bytes,
        other => panic!("not a file sink: {other:?}"),
    }
}

fn trained_model(path: &str) -> Value {
    let res = run_offline(&graph(&decision_doc(path, None)), None).unwrap();
    serde_json::from_slice(file_bytes(&res.sinks["out"])).unwrap()
}

#[test]
fn filter_view_parses_with_five_nodes_and_four_edges() {
    let text = std::fs::read_to_string(repo_file("pipelines/filter_view.json")).unwrap();
    let doc = noetic_flow::parse_pipeline(&text, "filter_view.json").unwrap();
    assert_eq!((doc.nodes.len(), doc.edges.len()), (5, 4));
    let g = noetic_flow::validate_graph(&doc, "filter_view.json").unwrap();
    assert_eq!(g.order, vec!["replay", "select", "butter", "plot_filtered", "plot_raw"]);
}

#[test]
fn ica_cleanup_validates() {
    let text = std::fs::read_to_string(repo_file("pipelines/ica_cleanup.json")).unwrap();
    let g = noetic_flow::load_graph(&text, "ica_cleanup.json").unwrap();
    let pos = |id: &str| g.order.iter().position(|n| n == id).unwrap();
    assert!(pos("select") < pos("kaiser") && pos("kaiser") < pos("car") && pos("car") < pos("ica"));
    assert_eq!(g.doc.node("kaiser").unwrap().params["length"], json!(250));
}

#[test]
fn ica_cleanup_runs_and_ica_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_rec(dir.path(), "r.neeg", &erp_recording(6, 3));
    let g = load_shipped("ica_cleanup.json", &p);
    let a = run_offline(&g, None).unwrap();
    let b = run_offline(&g, None).unwrap();
    let clean = frames_of(&a.sinks["plot_clean"]);
    assert_eq!(clean.len(), 6);
    assert_eq!(clean, frames_of(&b.sinks["plot_clean"]));
    assert_eq!(a.reports["ica"], b.reports["ica"]);
}

#[test]
fn source_to_file_copies_recording_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let src = write_rec(dir.path(), "in.neeg", &erp_recording(4, 1));
    let dst = dir.path().join("out.neeg");
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.replay", json!({ "path": src.to_str().unwrap() }))
        .add("out", "sink.file", json!({ "path": dst.to_str().unwrap() }));
    d.link("src", "out");
    run_offline(&graph(&d), None).unwrap();
    assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&dst).unwrap());

    // The same copy streamed frame by frame.
    let g = graph(&d);
    let rec = read_recording(&src).unwrap();
    let (_, stop) = run_frames(&g, "copy", recording_to_frames(&rec.block, &rec.markers, &rec.subject_tag, 7)).unwrap();
    assert_eq!(file_bytes(&stop.sinks["out"]), std::fs::read(&src).unwrap().as_slice());
}

#[test]
fn running_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_rec(dir.path(), "r.neeg", &erp_recording(20, 5));
    let path = p.to_str().unwrap();
    let a = run_offline(&graph(&decision_doc(path, None)), None).unwrap();
    let b = run_offline(&graph(&decision_doc(path, None)), None).unwrap();
    assert_eq!(file_bytes(&a.sinks["out"]), file_bytes(&b.sinks["out"]));
    assert!(a.reports["train"]["cv"]["mean_accuracy"].as_f64().unwrap() > 0.5);
}

#[test]
fn filter_view_offline_equals_online() {
    let dir = tempfile::tempdir().unwrap();
    let rec = erp_recording(6, 2);
    let p = write_rec(dir.path(), "r.neeg", &rec);
    let g = load_shipped("filter_view.json", &p);
    let offline = run_offline(&g, None).unwrap();
    let frames = noetic_flow::source_frames(&g, "replay").unwrap();
    let (emitted, _) = run_frames(&g, "live", frames).unwrap();
    for sink in ["plot_raw", "plot_filtered"] {
        let a = frames_of(&offline.sinks[sink]);
        assert!(!a.is_empty());
        let b: Vec<_> = emitted
            .plots
            .iter()
            .filter(|f| f.node == sink)
            .map(|f| (f.seq, f.t, f.payload.clone()))
            .collect();
        assert_eq!(a, b, "{sink}");
    }
}

#[test]
fn online_replay_matches_offline_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_rec(dir.path(), "r.neeg", &erp_recording(24, 8));
    let path = p.to_str().unwrap();
    let model = trained_model(path);
    let g = graph(&decision_doc(path, Some(model)));
    let offline = run_offline(&g, None).unwrap().decisions();
    assert_eq!(offline.len(), 24);
    let (emitted, stop) = run_frames(&g, "s", noetic_flow::source_frames(&g, "src").unwrap()).unwrap();
    let online: Vec<_> = emitted
        .events
        .iter()
        .filter_map(|e| match e {
            noetic_flow::Event::Decision(d) => Some(d.epoch_level()),
            _ => None,
        })
        .collect();
    assert_eq!(online, offline.iter().map(|d| d.epoch_level()).collect::<Vec<_>>());
    assert_eq!(stop.summary.decisions, 24);
}

#[test]
fn identity_graph_passes_every_data_frame_in_order() {
    let rec = erp_recording(2, 4);
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.stream", json!({}))
        .add("plot", "sink.plot", json!({ "kind": "raw", "window_samples": 50 }));
    d.link("src", "plot");
    let g = graph(&d);
    let frames = recording_to_frames(&rec.block, &[], "", 50);
    let k = frames.iter().filter(|f| matches!(f, WireFrame::Data(_))).count();
    let (emitted, stop) = run_frames(&g, "id", frames).unwrap();
    assert_eq!(emitted.plots.len(), k);
    assert!(emitted.plots.iter().enumerate().all(|(i, f)| f.seq == i as u64));
    assert!(emitted.plots.windows(2).all(|w| w[0].t < w[1].t));
    assert_eq!(stop.summary.data_frames, k as u64);
}

#[test]
fn stop_before_any_frame_is_empty() {
    let mut d2 = PipelineDoc::new(0);
    d2.add("src", "source.stream", json!({}))
        .add("plot", "sink.plot", json!({ "kind": "raw" }));
    d2.link("src", "plot");
    let s = start_online(&graph(&d2), "empty").unwrap();
    let r = s.stop().unwrap();
    let m = &r.summary;
    assert_eq!((m.frames_in, m.frames_consumed, m.malformed, m.decisions, m.plot_frames), (0, 0, 0, 0, 0));
    assert_eq!(m.dropped_plot_frames, 0);
    assert_eq!(m.frame_latency.count, 0);
}

#[test]
fn malformed_frames_are_counted_not_fatal() {
    let rec = erp_recording(2, 4);
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.stream", json!({})).add("out", "sink.file", json!({}));
    d.link("src", "out");
    let g = graph(&d);
    let mut s = start_online(&g, "bad").unwrap();
    s.on_frame(WireFrame::Data(DataFrame { t0: 0.0, n_channels: 8, samples: vec![0.0; 8] })).unwrap();
    s.on_bytes(&[1, 2, 3]).unwrap();
    let frames = recording_to_frames(&rec.block, &rec.markers, "", 64);
    let n = frames.len() as u64;
    for f in frames {
        s.on_bytes(&encode_frame(&f).unwrap()).unwrap();
    }
    s.on_frame(WireFrame::Data(DataFrame { t0: 0.0, n_channels: 3, samples: vec![0.0; 3] })).unwrap();
    let r = s.stop().unwrap();
    let m = r.summary;
    assert_eq!(m.malformed, 3);
    assert_eq!(m.frames_in, n + 3);
    assert_eq!(m.frames_in, m.frames_consumed + m.malformed);
    assert!(m.malformed_reasons[0].contains("before header"));
    let out = noetic_core::io::decode_recording(file_bytes(&r.sinks["out"])).unwrap();
    assert_eq!(out.block.samples, rec.block.samples);
}

#[test]
fn node_failure_names_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_rec(dir.path(), "r.neeg", &erp_recording(2, 4));
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.replay", json!({ "path": p.to_str().unwrap() }))
        .add("sel", "select.channels", json!({ "channels": [0, 99] }))
        .add("out", "sink.file", json!({}));
    d.link("src", "sel").link("sel", "out");
    match run_offline(&graph(&d), None).unwrap_err() {
        FlowError::Runtime { node, message } => {
            assert_eq!(node, "sel");
            assert!(message.contains("99"), "{message}");
        }
        e => panic!("{e}"),
    }
}

#[test]
fn missing_recording_reports_source_and_path() {
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.replay", json!({ "path": "/nonexistent/x.neeg" })).add("out", "sink.file", json!({}));
    d.link("src", "out");
    let e = run_offline(&graph(&d), None).unwrap_err().to_string();
    assert!(e.contains("src") && e.contains("/nonexistent/x.neeg"), "{e}");
}

#[test]
fn online_rejects_offline_only_graphs() {
    let e = start_online(&graph(&decision_doc("x.neeg", None)), "s").err().unwrap().to_string();
    assert!(e.contains("train") && e.contains("offline"), "{e}");

    let mut d = PipelineDoc::new(0);
    d.add("a", "source.stream", json!({}))
        .add("b", "source.stream", json!({}))
        .add("pa", "sink.plot", json!({ "kind": "raw" }))
        .add("pb", "sink.plot", json!({ "kind": "raw" }));
    d.link("a", "pa").link("b", "pb");
    assert!(start_online(&graph(&d), "s").err().unwrap().to_string().contains("exactly one source"));
}

#[test]
fn zero_phase_is_rejected_on_streams() {
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.stream", json!({}))
        .add("f", "filt.butter", json!({ "kind": "lowpass", "order": 2, "cutoffs": [10.0], "zero_phase": true }))
        .add("p", "sink.plot", json!({ "kind": "filtered" }));
    d.link("src", "f").link("f", "p");
    let e = start_online(&graph(&d), "s").err().unwrap().to_string();
    assert!(e.contains("'f'") && e.contains("zero_phase"), "{e}");
}

fn amplitude_doc() -> PipelineDoc {
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.stream", json!({}))
        .add("ep", "epoch.markers", json!({ "post_s": 0.5 }))
        .add("amp", "artifact.amplitude", json!({ "threshold_uv": 100.0 }))
        .add("f", "filt.butter", json!({ "kind": "lowpass", "order": 2, "cutoffs": [10.0] }))
        .add("p", "sink.plot", json!({ "kind": "raw" }))
        .add("pf", "sink.plot", json!({ "kind": "filtered" }));
    d.link("src", "ep").link("ep", "amp").link("amp", "p").link("src", "f").link("f", "pf");
    d
}

#[test]
fn param_updates_ack_next_frame_and_validate() {
    let rec = erp_recording(4, 6);
    let g = graph(&amplitude_doc());
    let mut s = start_online(&g, "p").unwrap();
    let frames = recording_to_frames(&rec.block, &rec.markers, "", 25);
    for f in frames.iter().take(11) {
        s.on_frame(f.clone()).unwrap();
    }
    let sent = frames.iter().take(11).filter(|f| matches!(f, WireFrame::Data(_))).count() as u64;
    let ack = s.update_param("amp", "threshold_uv", json!(80.0)).unwrap();
    assert_eq!(ack.applied_frame_index, sent);
    assert!(s.update_param("ep", "post_s", json!(1.0)).unwrap_err().to_string().contains("not tunable"));
    assert!(s.update_param("nope", "x", json!(1)).unwrap_err().to_string().contains("nope"));
    assert!(s.update_param("amp", "threshold_uv", json!("high")).is_err());
    assert!(s.update_param("amp", "threshold_uv", json!(-1.0)).is_err());
    assert!(s.update_param("f", "cutoffs", json!([500.0])).is_err());
    let r = s.stop().unwrap();
    assert_eq!(r.reports["amp"]["threshold_uv"], json!(80.0));
    assert_eq!(r.summary.param_updates.len(), 1);
}

#[test]
fn cutoff_change_resets_filter_state() {
    let rec = erp_recording(4, 6);
    let frames = recording_to_frames(&rec.block, &[], "", 50);
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.stream", json!({}))
        .add("f", "filt.butter", json!({ "kind": "lowpass", "order": 2, "cutoffs": [10.0] }))
        .add("p", "sink.plot", json!({ "kind": "filtered", "window_samples": 50 }));
    d.link("src", "f").link("f", "p");
    let g = graph(&d);
    let mut s = start_online(&g, "f").unwrap();
    let mut plots = Vec::new();
    for f in frames.iter().take(6) {
        plots.extend(s.on_frame(f.clone()).unwrap().plots);
    }
    let ack = s.update_param("f", "cutoffs", json!([20.0])).unwrap();
    assert_eq!(ack.applied_frame_index, 5);
    let after = s.on_frame(frames[6].clone()).unwrap().plots;
    assert!(s.update_param("f", "cutoffs", json!([500.0])).is_err(), "later updates are still checked against fs");

    // A fresh 20 Hz filter started on the same frame.
    let mut fresh = PipelineDoc::new(0);
    fresh
        .add("src", "source.stream", json!({}))
        .add("f", "filt.butter", json!({ "kind": "lowpass", "order": 2, "cutoffs": [20.0] }))
        .add("p", "sink.plot", json!({ "kind": "filtered", "window_samples": 50 }));
    fresh.link("src", "f").link("f", "p");
    let mut s2 = start_online(&graph(&fresh), "f").unwrap();
    s2.on_frame(frames[0].clone()).unwrap();
    let WireFrame::Data(mut df) = frames[6].clone() else { panic!() };
    df.t0 = 0.0;
    let expected = s2.on_frame(WireFrame::Data(df)).unwrap().plots;
    let data = |p: &PlotPayload| match p {
        PlotPayload::Series { data, .. } => data.clone(),
        _ => panic!(),
    };
    assert_eq!(data(&after[0].payload), data(&expected[0].payload));
    assert_eq!(plots.len(), 5);
}

#[test]
fn threaded_updates_are_ordered_last_writer_wins() {
    let rec = erp_recording(4, 6);
    let g = graph(&amplitude_doc());
    let bus = PlotBus::new();
    let sub = bus.subscribe(Some(["p".to_string()].into()), 10_000);
    let h = spawn_online(&g, "t", bus.clone(), 16).unwrap();
    let frames = recording_to_frames(&rec.block, &rec.markers, "", 25);
    for f in frames.iter().take(21) {
        h.send(f.clone()).unwrap();
    }
    let sent = frames.iter().take(21).filter(|f| matches!(f, WireFrame::Data(_))).count() as u64;
    let a = h.update_param("amp", "threshold_uv", json!(80.0)).unwrap();
    let b = h.update_param("amp", "threshold_uv", json!(60.0)).unwrap();
    assert_eq!((a.applied_frame_index, b.applied_frame_index), (sent, sent));
    for f in frames.iter().skip(21) {
        h.send(f.clone()).unwrap();
    }
    let r = h.stop().unwrap();
    assert_eq!(r.reports["amp"]["threshold_uv"], json!(60.0));
    let acks: Vec<_> = r.summary.param_updates.iter().map(|a| a.value.clone()).collect();
    assert_eq!(acks, vec![json!(80.0), json!(60.0)]);
    assert_eq!(r.summary.frames_in, frames.len() as u64);
    let got = sub.drain();
    assert!(got.iter().all(|(_, f)| f.node == "p"));
    assert!(got.windows(2).all(|w| w[1].0 == w[0].0 + 1));
}

#[test]
fn slow_plot_subscriber_never_blocks_the_engine() {
    let rec = erp_recording(8, 6);
    let mut d = PipelineDoc::new(0);
    d.add("src", "source.stream", json!({}))
        .add("p", "sink.plot", json!({ "kind": "raw", "window_samples": 25 }));
    d.link("src", "p");
    let bus = PlotBus::new();
    let slow = bus.subscribe(None, 4);
    let h = spawn_online(&graph(&d), "slow", bus.clone(), 8).unwrap();
    let frames = recording_to_frames(&rec.block, &[], "", 25);
    let n_data = frames.len() as u64 - 2;
    for f in frames {
        h.send(f).unwrap();
    }
    let r = h.stop().unwrap();
    assert_eq!(r.summary.data_frames, n_data);
    assert_eq!(r.summary.plot_frames, n_data);
    assert_eq!(r.summary.dropped_plot_frames, n_data - 4);
    let seqs: Vec<u64> = slow.drain().iter().map(|(s, _)| *s).collect();
    assert_eq!(seqs, (n_data - 4..n_data).collect::<Vec<_>>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decisions_do_not_depend_on_frame_size(spf in 1usize..200, seed in 0u64..4) {
        let dir = tempfile::tempdir().unwrap();
        let p = write_rec(dir.path(), "r.neeg", &erp_recording(10, seed));
        let path = p.to_str().unwrap();
        let g = graph(&decision_doc(path, Some(trained_model(path))));
        let offline: Vec<_> = run_offline(&g, None).unwrap().decisions().iter().map(|d| d.epoch_level()).collect();
        let rec = read_recording(&p).unwrap();
        let (emitted, _) = run_frames(&g, "s", recording_to_frames(&rec.block, &rec.markers, "", spf)).unwrap();
        let online: Vec<_> = emitted.events.iter().filter_map(|e| match e {
            noetic_flow::Event::Decision(d) => Some(d.epoch_level()),
            _ => None,
        }).collect();
        prop_assert_eq!(online, offline);
    }
}
