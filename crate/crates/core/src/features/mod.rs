//! Feature kernels and labeled feature matrices.
//!
//! Per-channel features are named `ch{N}.{family}.{name}`; pairwise
//! connectivity features are named `ch{I}-ch{J}.{method}.{band}`.

pub mod connectivity;
pub mod csp;
pub mod nonlinear;
pub mod spectral;
pub mod stats;
pub mod wavelet;

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::signal::EpochSet;

pub use connectivity::{connectivity, Connectivity, ConnectivityMethod};
pub use csp::{csp_features, csp_fit, CspModel};
pub use nonlinear::{dfa, entropy, fractal_dimension, EntropyMethod, EntropyValue, FractalMethod};
pub use spectral::{amplitude_spectrum, band_powers, default_bands, stft, welch_psd, Band, Spectrum, Stft};
pub use stats::{hjorth, moments, Hjorth, Moments};
pub use wavelet::dwt_energies;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FeatureKind {
    Moments,
    Hjorth,
    Fractal { method: FractalMethod },
    Entropy { method: EntropyMethod },
    Dfa,
    BandPower {
        #[serde(default = "default_bands")]
        bands: Vec<Band>,
        #[serde(default)]
        relative: bool,
    },
    /// Frame-averaged STFT magnitude per band.
    Stft {
        #[serde(default = "default_bands")]
        bands: Vec<Band>,
    },
    Dwt {
        #[serde(default)]
        levels: Option<usize>,
    },
    /// All channel pairs `i < j`.
    Connectivity { method: ConnectivityMethod, band: Band },
}

impl FeatureKind {
    pub fn family(&self) -> &'static str {
        match self {
            FeatureKind::Moments => "moments",
            FeatureKind::Hjorth => "hjorth",
            FeatureKind::Fractal { .. } => "fractal",
            FeatureKind::Entropy { .. } => "entropy",
            FeatureKind::Dfa => "dfa",
            FeatureKind::BandPower { .. } => "bandpower",
            FeatureKind::Stft { .. } => "stft",
            FeatureKind::Dwt { .. } => "dwt",
            FeatureKind::Connectivity { .. } => "connectivity",
        }
    }
}

fn channel_features(x: &[f64], fs: f64, kind: &FeatureKind) -> Result<(Vec<String>, Vec<f64>)> {
    let named = |names: &[&str], values: Vec<f64>| (names.iter().map(|s| s.to_string()).collect(), values);
    Ok(match kind {
        FeatureKind::Moments => {
            let m = moments(x)?;
            named(&["mean", "variance", "skewness", "kurtosis"], vec![m.mean, m.variance, m.skewness, m.kurtosis])
        }
        FeatureKind::Hjorth => {
            let h = match hjorth(x) {
                Ok(h) => h,
                Err(Error::ZeroVariance) => Hjorth { activity: 0.0, mobility: 0.0, complexity: 0.0 },
                Err(e) => return Err(e),
            };
            named(&["activity", "mobility", "complexity"], vec![h.activity, h.mobility, h.complexity])
        }
        FeatureKind::Fractal { method } => {
            let name = match method {
                FractalMethod::Higuchi => "higuchi",
                FractalMethod::Katz => "katz",
            };
            named(&[name], vec![fractal_dimension(x, *method)?])
        }
        FeatureKind::Entropy { method } => {
            let name = match method {
                EntropyMethod::Shannon => "shannon",
                EntropyMethod::Approximate => "approximate",
                EntropyMethod::Sample => "sample",
            };
            let v = entropy(x, *method)?;
            let value = if v.infinite { nonlinear::sample_entropy_cap(x.len()) } else { v.value };
            named(&[name], vec![value])
        }
        FeatureKind::Dfa => named(&["alpha"], vec![dfa(x)?]),
        FeatureKind::BandPower { bands, relative } => band_powers(&welch_psd(x, fs)?, bands, *relative)?,
        FeatureKind::Stft { bands } => {
            let st = stft(x, fs)?;
            let mut values = Vec::with_capacity(bands.len());
            for b in bands {
                let bins: Vec<usize> = (0..st.freqs.len()).filter(|&k| st.freqs[k] >= b.lo && st.freqs[k] <= b.hi).collect();
                if bins.is_empty() {
                    return Err(Error::InvalidArgument(format!("band '{}' contains no STFT bins", b.name)));
                }
                let total: f64 = st.magnitudes.iter().map(|row| bins.iter().map(|&k| row[k]).sum::<f64>()).sum();
                values.push(total / (bins.len() * st.magnitudes.len()) as f64);
            }
            (bands.iter().map(|b| b.name.clone()).collect(), values)
        }
        FeatureKind::Dwt { levels } => {
            let (names, values) = dwt_energies(x, *levels)?;
            (names.into_iter().map(|n| n.trim_start_matches("dwt.").to_string()).collect(), values)
        }
        FeatureKind::Connectivity { .. } => unreachable!("pairwise kind handled by caller"),
    })
}

/// Features of one epoch (`channels × samples`), with `ch{N}.` prefixes.
pub fn extract_epoch(data: &[Vec<f64>], fs: f64, kind: &FeatureKind) -> Result<(Vec<String>, Vec<f64>)> {
    let mut names = Vec::new();
    let mut values = Vec::new();
    if let FeatureKind::Connectivity { method, band } = kind {
        let tag = match method {
            ConnectivityMethod::Xcorr => "xcorr",
            ConnectivityMethod::Coherence => "coherence",
            ConnectivityMethod::Psi => "psi",
        };
        for i in 0..data.len() {
            for j in i + 1..data.len() {
                // A flat channel carries no coupling information; report 0.
                let c = match connectivity(&data[i], &data[j], fs, *method, band) {
                    Err(Error::ZeroVariance) => Connectivity { value: 0.0, lag: None },
                    other => other?,
                };
                names.push(format!("ch{i}-ch{j}.{tag}.{}", band.name));
                values.push(c.value);
                if *method == ConnectivityMethod::Xcorr {
                    names.push(format!("ch{i}-ch{j}.{tag}.lag"));
                    values.push(c.lag.unwrap_or(0) as f64);
                }
            }
        }
        return Ok((names, values));
    }
    let family = kind.family();
    for (ch, x) in data.iter().enumerate() {
        let (n, v) = channel_features(x, fs, kind)?;
        names.extend(n.into_iter().map(|n| format!("ch{ch}.{family}.{n}")));
        values.extend(v);
    }
    Ok((names, values))
}

/// Row-per-epoch feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Option<u32>>,
    /// Marker time of the epoch each row came from.
    pub times: Vec<f64>,
}

impl FeatureMatrix {
    pub fn empty(names: Vec<String>) -> Self {
        Self { names, rows: Vec::new(), labels: Vec::new(), times: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for n in &self.names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate feature name '{n}'")));
            }
        }
        if self.labels.len() != self.rows.len() || self.times.len() != self.rows.len() {
            return Err(Error::InvalidArgument("labels/times must parallel rows".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != self.names.len() {
                return Err(Error::DimensionMismatch { expected: self.names.len(), got: r.len() });
            }
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} feature '{}' is not finite", self.names[j])));
            }
        }
        Ok(())
    }

    pub fn labels_strict(&self) -> Result<Vec<u32>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::InvalidArgument(format!("row {i} has no class label"))))
            .collect()
    }

    /// Column-wise concatenation of matrices over the same rows.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.rows.len() != other.rows.len() {
            return Err(Error::DimensionMismatch { expected: self.rows.len(), got: other.rows.len() });
        }
        let mut out = self.clone();
        out.names.extend(other.names.iter().cloned());
        for (r, o) in out.rows.iter_mut().zip(&other.rows) {
            r.extend_from_slice(o);
        }
        out.validate()?;
        Ok(out)
    }

    /// CSV with the feature names as header.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.names).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Extracts `kind` from every epoch, in parallel when enabled.
pub fn extract_matrix(set: &EpochSet, kind: &FeatureKind) -> Result<FeatureMatrix> {
    let per_epoch = crate::par::try_map_slice(&set.epochs, |e| extract_epoch(&e.data, set.fs, kind))?;
    let names = match per_epoch.first() {
        Some((n, _)) => n.clone(),
        None => Vec::new(),
    };
    let m = FeatureMatrix {
        names,
        rows: per_epoch.into_iter().map(|(_, v)| v).collect(),
        labels: set.epochs.iter().map(|e| e.class_id).collect(),
        times: set.epochs.iter().map(|e| e.marker_t).collect(),
    };
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{ChannelInfo, Epoch};
    use proptest::prelude::*;

    fn set(data: Vec<Vec<Vec<f64>>>, fs: f64) -> EpochSet {
        let n_ch = data[0].len();
        let len = data[0][0].len();
        EpochSet {
            epochs: data
                .into_iter()
                .enumerate()
                .map(|(i, d)| Epoch { data: d, class_id: Some(i as u32 % 2), marker_t: i as f64 })
                .collect(),
            fs,
            channels: ChannelInfo::numbered(n_ch),
            pre_s: 0.0,
            post_s: len as f64 / fs,
        }
    }

    fn all_kinds() -> Vec<FeatureKind> {
        vec![
            FeatureKind::Moments,
            FeatureKind::Hjorth,
            FeatureKind::Fractal { method: FractalMethod::Higuchi },
            FeatureKind::Fractal { method: FractalMethod::Katz },
            FeatureKind::Entropy { method: EntropyMethod::Shannon },
            FeatureKind::Entropy { method: EntropyMethod::Approximate },
            FeatureKind::Entropy { method: EntropyMethod::Sample },
            FeatureKind::Dfa,
            FeatureKind::BandPower { bands: default_bands(), relative: true },
            FeatureKind::Stft { bands: default_bands() },
            FeatureKind::Dwt { levels: None },
            FeatureKind::Connectivity { method: ConnectivityMethod::Coherence, band: Band::new("alpha", 8.0, 13.0) },
        ]
    }

    #[test]
    fn names_follow_convention() {
        let x: Vec<f64> = (0..256).map(|k| (k as f64 * 0.3).sin()).collect();
        let s = set(vec![vec![x.clone(), x.iter().map(|v| v * 0.5 + 0.1).collect()]], 128.0);
        let m = extract_matrix(&s, &FeatureKind::BandPower { bands: default_bands(), relative: false }).unwrap();
        assert_eq!(m.names[0], "ch0.bandpower.delta.pow");
        assert_eq!(m.names[5], "ch1.bandpower.delta.pow");
        let csv = m.to_csv().unwrap();
        assert!(csv.starts_with("ch0.bandpower.delta.pow,"));
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut rng = crate::rng::seeded(1);
        let data: Vec<Vec<Vec<f64>>> = (0..6)
            .map(|_| (0..2).map(|_| (0..256).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).collect())
            .collect();
        let s = set(data, 128.0);
        for kind in all_kinds() {
            let a = extract_matrix(&s, &kind).unwrap();
            let b = crate::par::sequential(|| extract_matrix(&s, &kind)).unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn features_finite_on_finite_input(seed in any::<u64>(), flat in any::<bool>()) {
            let mut rng = crate::rng::seeded(seed);
            let row = |rng: &mut rand_xorshift::XorShiftRng| -> Vec<f64> {
                if flat { vec![1.5; 256] } else { (0..256).map(|_| rand::Rng::random_range(rng, -50.0..50.0)).collect() }
            };
            let data = vec![vec![row(&mut rng), (0..256).map(|k| (k as f64 * 0.7).sin()).collect()]];
            let s = set(data, 128.0);
            for kind in all_kinds() {
                let m = extract_matrix(&s, &kind);
                prop_assert!(m.is_ok(), "{:?}: {:?}", kind, m);
            }
        }

        #[test]
        fn scale_invariant_features(seed in any::<u64>(), a in 0.1f64..20.0) {
            let mut rng = crate::rng::seeded(seed);
            let x: Vec<f64> = (0..512).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v).collect();
            let h = (hjorth(&x).unwrap(), hjorth(&y).unwrap());
            prop_assert!((h.0.mobility - h.1.mobility).abs() < 1e-9);
            prop_assert!((h.0.complexity - h.1.complexity).abs() < 1e-9);
            prop_assert!((h.1.activity / h.0.activity - a * a).abs() < 1e-9 * a * a);
            prop_assert!((dfa(&x).unwrap() - dfa(&y).unwrap()).abs() < 1e-9);
            let bands = default_bands();
            let rx = band_powers(&welch_psd(&x, 128.0).unwrap(), &bands[..4], true).unwrap().1;
            let ry = band_powers(&welch_psd(&y, 128.0).unwrap(), &bands[..4], true).unwrap().1;
            for (p, q) in rx.iter().zip(&ry) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
