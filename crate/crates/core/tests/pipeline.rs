use proptest::prelude::*;

use noetic_core::classify::{cross_validate, epoch_covariance, train, ClassifierKind, ClassifierModel, Hyperparams, TrainData};
use noetic_core::features::{extract_matrix, FeatureKind};
use noetic_core::io::{decode_stream, encode_frame, read_recording, recording_to_frames, synth_recording, write_recording, ErpSource, NoiseSpec, SynthSpec, WireFrame};
use noetic_core::preprocess::{apply_filter, design_butterworth, DesignSpec, FilterKind, StreamingFilter};
use noetic_core::signal::epoch_by_markers;

/// Two ERP classes with different topographies over pink noise.
fn erp_spec(seed: u64) -> SynthSpec {
    let onsets = |first: f64| (0..30).map(|k| first + 2.0 * k as f64).collect::<Vec<_>>();
    let mut spec = SynthSpec::new(62.0, 250.0, 6, seed);
    spec.noise = NoiseSpec { pink_gain: 4.0, white_gain: 1.0 };
    spec.erp = vec![
        ErpSource { label: "left".into(), class_id: Some(0), latency_s: 0.3, amplitude_uv: 12.0, channels: vec![0, 1], onsets: onsets(1.0) },
        ErpSource { label: "right".into(), class_id: Some(1), latency_s: 0.3, amplitude_uv: 12.0, channels: vec![4, 5], onsets: onsets(2.0) },
    ];
    spec
}

#[test]
fn recording_survives_disk_and_wire() {
    let (block, markers) = synth_recording(&erp_spec(11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("erp.neeg");
    write_recording(&block, &markers, "s01", &path).unwrap();
    let back = read_recording(&path).unwrap();
    assert_eq!(back.block, block);
    assert_eq!(back.markers, markers);

    let frames = recording_to_frames(&block, &markers, "s01", 25);
    let bytes: Vec<u8> = frames.iter().flat_map(|f| encode_frame(f).unwrap()).collect();
    let decoded = decode_stream(&bytes).unwrap();
    assert_eq!(decoded, frames);

    let mut samples = 0;
    let mut seen_markers = Vec::new();
    for f in &decoded {
        match f {
            WireFrame::Data(d) => samples += d.samples.len() / block.n_channels(),
            WireFrame::Marker(m) => seen_markers.push(m.clone()),
            _ => {}
        }
    }
    assert_eq!(samples, block.len());
    assert_eq!(seen_markers, markers);
}

#[test]
fn erp_classes_separate_end_to_end() {
    let (block, markers) = synth_recording(&erp_spec(12)).unwrap();
    let (epochs, report) = epoch_by_markers(&block, &markers, -0.1, 0.6, 0.0).unwrap();
    assert!(report.dropped.is_empty());
    assert_eq!(epochs.len(), 60);

    let lp = design_butterworth(FilterKind::Lowpass, &DesignSpec::Order { order: 4, cutoffs: vec![15.0] }, epochs.fs).unwrap();
    let filtered = epochs.with_epochs(
        epochs
            .epochs
            .iter()
            .map(|e| {
                let mut e = e.clone();
                e.data = apply_filter(&e.data, epochs.fs, &lp, true).unwrap();
                e
            })
            .collect(),
    );
    let labels = filtered.labels().unwrap();
    let hp = Hyperparams::default();

    let covs = filtered.epochs.iter().map(|e| epoch_covariance(&e.data, 0.05).unwrap()).collect();
    let cov_data = TrainData::Covariances(covs);
    for kind in [ClassifierKind::Rmdm, ClassifierKind::TangentLinear] {
        let cv = cross_validate(kind, &cov_data, &labels, 5, &hp).unwrap();
        assert!(cv.mean_accuracy >= 0.9, "{kind:?}: {}", cv.mean_accuracy);
    }

    let moments = extract_matrix(&filtered, &FeatureKind::Moments).unwrap();
    let feat_data = TrainData::Features(moments.rows.clone());
    let cv = cross_validate(ClassifierKind::Nb, &feat_data, &labels, 5, &hp).unwrap();
    assert!(cv.mean_accuracy >= 0.9, "nb: {}", cv.mean_accuracy);

    // a saved model predicts exactly like the one in memory
    let model = train(ClassifierKind::Rmdm, &cov_data, &labels, &hp).unwrap();
    let loaded = ClassifierModel::from_json(&model.to_json()).unwrap();
    for i in 0..cov_data.len() {
        assert_eq!(model.predict(cov_data.sample(i)).unwrap(), loaded.predict(cov_data.sample(i)).unwrap());
    }
}

/// Direct-form I biquad cascade, written independently of the library.
fn reference_cascade(sections: &[[f64; 5]], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for s in sections {
        let [b0, b1, b2, a1, a2] = *s;
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in y.iter_mut() {
            let out = b0 * *v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, *v, y1, out);
            *v = out;
        }
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Streaming output does not depend on how the input is chunked.
    #[test]
    fn streaming_filter_is_chunking_invariant(
        x in proptest::collection::vec(-100.0f64..100.0, 50..400),
        cuts in proptest::collection::vec(1usize..60, 0..12),
        order in 1usize..6,
        lo in 2.0f64..20.0,
    ) {
        let spec = design_butterworth(FilterKind::Bandpass, &DesignSpec::Order { order, cutoffs: vec![lo, lo + 15.0] }, 250.0).unwrap();
        let expected = reference_cascade(&spec.sections, &x);

        let mut f = StreamingFilter::new(spec, 1);
        let mut got = Vec::with_capacity(x.len());
        let mut rest = &x[..];
        for c in cuts.iter().chain(std::iter::once(&usize::MAX)) {
            let (head, tail) = rest.split_at((*c).min(rest.len()));
            let mut chunk = vec![head.to_vec()];
            f.process(&mut chunk).unwrap();
            got.extend(chunk.remove(0));
            rest = tail;
        }
        let scale = expected.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in got.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-9 * scale, "{} vs {}", a, b);
        }
        prop_assert_eq!(got.len(), x.len());
    }
}
