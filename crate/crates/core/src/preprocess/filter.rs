//! Butterworth design as second-order sections, causal streaming
//! application, and zero-phase forward-backward filtering.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
    Bandstop,
}

impl FilterKind {
    pub fn is_band(self) -> bool {
        matches!(self, FilterKind::Bandpass | FilterKind::Bandstop)
    }

    fn n_cutoffs(self) -> usize {
        if self.is_band() {
            2
        } else {
            1
        }
    }
}

/// Either an explicit order and cutoffs, or edge frequencies with ripple and
/// attenuation limits from which the minimal order is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DesignSpec {
    Order { order: usize, cutoffs: Vec<f64> },
    Edges { passband: Vec<f64>, stopband: Vec<f64>, ripple_db: f64, attenuation_db: f64 },
}

/// Second-order section coefficients `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Section = [f64; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub cutoffs: Vec<f64>,
    pub fs: f64,
    pub sections: Vec<Section>,
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn unwarp(w: f64, fs: f64) -> f64 {
    fs / PI * (w / (2.0 * fs)).atan()
}

fn check_nyquist(freqs: &[f64], fs: f64) -> Result<()> {
    let nyq = fs / 2.0;
    for &f in freqs {
        if f >= nyq {
            return Err(Error::Nyquist { cutoff: f, nyquist: nyq });
        }
        if !(f > 0.0) {
            return Err(Error::InvalidArgument(format!("cutoff {f} Hz must be > 0")));
        }
    }
    Ok(())
}

fn check_count(kind: FilterKind, freqs: &[f64], what: &str) -> Result<()> {
    if freqs.len() != kind.n_cutoffs() {
        return Err(Error::InvalidArgument(format!(
            "{kind:?} needs {} {what} frequencies, got {}",
            kind.n_cutoffs(),
            freqs.len()
        )));
    }
    if freqs.len() == 2 && !(freqs[0] < freqs[1]) {
        return Err(Error::InvalidArgument(format!("{what} frequencies must be increasing, got {freqs:?}")));
    }
    Ok(())
}

/// Minimal order and the cutoffs that put the passband edge exactly at the
/// ripple limit.
pub fn order_from_edges(
    kind: FilterKind,
    passband: &[f64],
    stopband: &[f64],
    ripple_db: f64,
    attenuation_db: f64,
    fs: f64,
) -> Result<(usize, Vec<f64>)> {
    check_count(kind, passband, "passband")?;
    check_count(kind, stopband, "stopband")?;
    check_nyquist(passband, fs)?;
    check_nyquist(stopband, fs)?;
    if !(ripple_db > 0.0 && attenuation_db > ripple_db) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < ripple ({ripple_db} dB) < attenuation ({attenuation_db} dB)"
        )));
    }
    let wp: Vec<f64> = passband.iter().map(|&f| prewarp(f, fs)).collect();
    let ws: Vec<f64> = stopband.iter().map(|&f| prewarp(f, fs)).collect();
    let nat = match kind {
        FilterKind::Lowpass => ws[0] / wp[0],
        FilterKind::Highpass => wp[0] / ws[0],
        FilterKind::Bandpass => ws
            .iter()
            .map(|&s| ((s * s - wp[0] * wp[1]) / (s * (wp[1] - wp[0]))).abs())
            .fold(f64::INFINITY, f64::min),
        FilterKind::Bandstop => ws
            .iter()
            .map(|&s| ((s * (wp[1] - wp[0])) / (wp[0] * wp[1] - s * s)).abs())
            .fold(f64::INFINITY, f64::min),
    };
    if !(nat > 1.0) {
        return Err(Error::InvalidArgument("stopband edges must lie outside the passband".into()));
    }
    let gs = 10f64.powf(0.1 * attenuation_db) - 1.0;
    let gp = 10f64.powf(0.1 * ripple_db) - 1.0;
    let order = ((gs / gp).log10() / (2.0 * nat.log10())).ceil().max(1.0) as usize;
    let eps = gp.sqrt();
    let shift = eps.powf(1.0 / order as f64);
    let warped = match kind {
        FilterKind::Lowpass => vec![wp[0] / shift],
        FilterKind::Highpass => vec![wp[0] * shift],
        FilterKind::Bandpass | FilterKind::Bandstop => {
            let wo2 = wp[0] * wp[1];
            let bw = (wp[1] - wp[0]) * if kind == FilterKind::Bandpass { 1.0 / shift } else { shift };
            let lo = -bw / 2.0 + (bw * bw / 4.0 + wo2).sqrt();
            vec![lo, lo + bw]
        }
    };
    let cutoffs: Vec<f64> = warped.iter().map(|&w| unwarp(w, fs)).collect();
    check_nyquist(&cutoffs, fs)?;
    Ok((order, cutoffs))
}

fn bilinear(s: Complex64, fs2: f64) -> Complex64 {
    (fs2 + s) / (fs2 - s)
}

/// Digital poles of the prewarped, bilinear-transformed prototype.
fn digital_poles(kind: FilterKind, order: usize, cutoffs: &[f64], fs: f64) -> (Vec<Complex64>, f64) {
    let fs2 = 2.0 * fs;
    let n = order as f64;
    let proto: Vec<Complex64> =
        (0..order).map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n))).collect();
    let w: Vec<f64> = cutoffs.iter().map(|&f| prewarp(f, fs)).collect();
    let mut analog = Vec::with_capacity(2 * order);
    let mut wo = 0.0;
    match kind {
        FilterKind::Lowpass => analog.extend(proto.iter().map(|p| p * w[0])),
        FilterKind::Highpass => analog.extend(proto.iter().map(|p| w[0] / p)),
        FilterKind::Bandpass | FilterKind::Bandstop => {
            wo = (w[0] * w[1]).sqrt();
            let half_bw = (w[1] - w[0]) / 2.0;
            for p in &proto {
                let c = if kind == FilterKind::Bandpass { p * half_bw } else { half_bw / p };
                let root = (c * c - wo * wo).sqrt();
                analog.push(c + root);
                analog.push(c - root);
            }
        }
    }
    let center = 2.0 * (wo / fs2).atan();
    (analog.into_iter().map(|p| bilinear(p, fs2)).collect(), center)
}

/// Groups poles into conjugate pairs (upper half-plane representative) and
/// leftover real poles, deterministically ordered.
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Option<Complex64>)> {
    const REAL_TOL: f64 = 1e-10;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > REAL_TOL).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= REAL_TOL).map(|p| p.re).collect();
    complex.sort_by(|a, b| a.arg().total_cmp(&b.arg()).then(a.norm().total_cmp(&b.norm())));
    real.sort_by(f64::total_cmp);
    let mut out: Vec<(Complex64, Option<Complex64>)> = complex.into_iter().map(|p| (p, Some(p.conj()))).collect();
    let mut it = real.chunks(2);
    for chunk in &mut it {
        let a = Complex64::new(chunk[0], 0.0);
        out.push((a, chunk.get(1).map(|&b| Complex64::new(b, 0.0))));
    }
    out
}

fn eval_section(s: &Section, z: Complex64) -> Complex64 {
    let zi = z.inv();
    let num = s[0] + s[1] * zi + s[2] * zi * zi;
    let den = 1.0 + s[3] * zi + s[4] * zi * zi;
    num / den
}

pub fn design_butterworth(kind: FilterKind, spec: &DesignSpec, fs: f64) -> Result<FilterSpec> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidArgument(format!("fs must be > 0, got {fs}")));
    }
    let (order, cutoffs) = match spec {
        DesignSpec::Order { order, cutoffs } => {
            check_count(kind, cutoffs, "cutoff")?;
            check_nyquist(cutoffs, fs)?;
            (*order, cutoffs.clone())
        }
        DesignSpec::Edges { passband, stopband, ripple_db, attenuation_db } => {
            order_from_edges(kind, passband, stopband, *ripple_db, *attenuation_db, fs)?
        }
    };
    if order == 0 {
        return Err(Error::InvalidArgument("filter order must be ≥ 1".into()));
    }
    let (poles, center) = digital_poles(kind, order, &cutoffs, fs);
    let reference = match kind {
        FilterKind::Lowpass | FilterKind::Bandstop => Complex64::new(1.0, 0.0),
        FilterKind::Highpass => Complex64::new(-1.0, 0.0),
        FilterKind::Bandpass => Complex64::from_polar(1.0, center),
    };
    let sections = pair_poles(&poles)
        .into_iter()
        .map(|(p, q)| {
            let (a1, a2, second_order) = match q {
                Some(q) => (-(p + q).re, (p * q).re, true),
                None => (-p.re, 0.0, false),
            };
            let b: [f64; 3] = match (kind, second_order) {
                (FilterKind::Lowpass, true) => [1.0, 2.0, 1.0],
                (FilterKind::Lowpass, false) => [1.0, 1.0, 0.0],
                (FilterKind::Highpass, true) => [1.0, -2.0, 1.0],
                (FilterKind::Highpass, false) => [1.0, -1.0, 0.0],
                (FilterKind::Bandpass, _) => [1.0, 0.0, -1.0],
                (FilterKind::Bandstop, _) => [1.0, -2.0 * center.cos(), 1.0],
            };
            let raw = [b[0], b[1], b[2], a1, a2];
            let g = eval_section(&raw, reference).norm();
            [b[0] / g, b[1] / g, b[2] / g, a1, a2]
        })
        .collect();
    Ok(FilterSpec { kind, order, cutoffs, fs, sections })
}

impl FilterSpec {
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * f_hz / self.fs);
        self.sections.iter().map(|s| eval_section(s, z)).product()
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }

    pub fn magnitude_db(&self, f_hz: f64) -> f64 {
        20.0 * self.magnitude(f_hz).log10()
    }

    /// Poles of every section.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for s in &self.sections {
            let (a1, a2) = (s[3], s[4]);
            if a2 == 0.0 {
                out.push(Complex64::new(-a1, 0.0));
            } else {
                let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                out.push((-a1 + disc) / 2.0);
                out.push((-a1 - disc) / 2.0);
            }
        }
        out
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0 - 1e-9)
    }

    /// Steady-state section states for a unit step input.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let g = (s[0] + s[1] + s[2]) / (1.0 + s[3] + s[4]);
                let y = g * level;
                let s2 = s[2] * level - s[4] * y;
                let s1 = s[1] * level - s[3] * y + s2;
                level = y;
                [s1, s2]
            })
            .collect()
    }

    pub fn padlen(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }
}

fn run_sections(sections: &[Section], state: &mut [[f64; 2]], x: &mut [f64]) {
    for (s, st) in sections.iter().zip(state.iter_mut()) {
        for v in x.iter_mut() {
            let input = *v;
            let y = s[0] * input + st[0];
            st[0] = s[1] * input - s[3] * y + st[1];
            st[1] = s[2] * input - s[4] * y;
            *v = y;
        }
    }
}

/// Per-channel causal filter state, carried across blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingFilter {
    pub spec: FilterSpec,
    state: Vec<Vec<[f64; 2]>>,
}

impl StreamingFilter {
    pub fn new(spec: FilterSpec, n_channels: usize) -> Self {
        let state = vec![vec![[0.0; 2]; spec.sections.len()]; n_channels];
        Self { spec, state }
    }

    pub fn reset(&mut self) {
        for ch in &mut self.state {
            ch.iter_mut().for_each(|s| *s = [0.0; 2]);
        }
    }

    pub fn n_channels(&self) -> usize {
        self.state.len()
    }

    /// Filters `channels × samples` in place.
    pub fn process(&mut self, data: &mut [Vec<f64>]) -> Result<()> {
        if data.len() != self.state.len() {
            return Err(Error::DimensionMismatch { expected: self.state.len(), got: data.len() });
        }
        for (row, st) in data.iter_mut().zip(self.state.iter_mut()) {
            run_sections(&self.spec.sections, st, row);
        }
        Ok(())
    }
}

fn forward_backward(spec: &FilterSpec, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = spec.padlen().min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let zi = spec.step_state();
    let scaled = |level: f64| zi.iter().map(|s| [s[0] * level, s[1] * level]).collect::<Vec<_>>();
    let mut st = scaled(ext[0]);
    run_sections(&spec.sections, &mut st, &mut ext);
    ext.reverse();
    let mut st = scaled(ext[0]);
    run_sections(&spec.sections, &mut st, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase filtering of one channel: the mean of the forward-backward and
/// backward-forward passes, which makes the result exactly time-reversal
/// symmetric.
pub fn filtfilt(spec: &FilterSpec, x: &[f64]) -> Vec<f64> {
    let a = forward_backward(spec, x);
    let mut rx = x.to_vec();
    rx.reverse();
    let mut b = forward_backward(spec, &rx);
    b.reverse();
    a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect()
}

/// Filters every channel of `channels × samples` data with fresh state.
pub fn apply_filter(data: &[Vec<f64>], fs: f64, spec: &FilterSpec, zero_phase: bool) -> Result<Vec<Vec<f64>>> {
    if (fs - spec.fs).abs() > 1e-9 * fs.max(1.0) {
        return Err(Error::SamplingRateMismatch { expected: spec.fs, got: fs });
    }
    Ok(crate::par::map_slice(data, |row| {
        if zero_phase {
            filtfilt(spec, row)
        } else {
            let mut out = row.clone();
            let mut st = vec![[0.0; 2]; spec.sections.len()];
            run_sections(&spec.sections, &mut st, &mut out);
            out
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn analytic_db(kind: FilterKind, order: usize, cutoffs: &[f64], fs: f64, f: f64) -> f64 {
        let w = prewarp(f, fs);
        let wc: Vec<f64> = cutoffs.iter().map(|&c| prewarp(c, fs)).collect();
        let ratio = match kind {
            FilterKind::Lowpass => w / wc[0],
            FilterKind::Highpass => wc[0] / w,
            FilterKind::Bandpass => (w * w - wc[0] * wc[1]) / (w * (wc[1] - wc[0])),
            FilterKind::Bandstop => (w * (wc[1] - wc[0])) / (wc[0] * wc[1] - w * w),
        };
        -10.0 * (1.0 + ratio.abs().powi(2 * order as i32)).log10()
    }

    fn order_spec(order: usize, cutoffs: &[f64]) -> DesignSpec {
        DesignSpec::Order { order, cutoffs: cutoffs.to_vec() }
    }

    #[test]
    fn section_counts_and_dc_gain() {
        let f = design_butterworth(FilterKind::Lowpass, &order_spec(4, &[30.0]), 250.0).unwrap();
        assert_eq!(f.sections.len(), 2);
        assert!((f.magnitude(0.0) - 1.0).abs() < 1e-9);
        let f = design_butterworth(FilterKind::Lowpass, &order_spec(5, &[30.0]), 250.0).unwrap();
        assert_eq!(f.sections.len(), 3);
        let f = design_butterworth(FilterKind::Bandpass, &order_spec(3, &[8.0, 12.0]), 250.0).unwrap();
        assert_eq!(f.sections.len(), 3);
    }

    #[test]
    fn cutoff_is_minus_three_db() {
        for order in 1..=8 {
            for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
                let f = design_butterworth(kind, &order_spec(order, &[20.0]), 256.0).unwrap();
                assert!((f.magnitude_db(20.0) + 3.0103).abs() < 0.05, "{kind:?} {order}");
            }
            let f = design_butterworth(FilterKind::Bandpass, &order_spec(order, &[8.0, 30.0]), 256.0).unwrap();
            assert!((f.magnitude_db(8.0) + 3.0103).abs() < 0.05);
            assert!((f.magnitude_db(30.0) + 3.0103).abs() < 0.05);
        }
    }

    #[test]
    fn matches_analytic_magnitude() {
        let fs = 500.0;
        let cases: Vec<(FilterKind, Vec<f64>)> = vec![
            (FilterKind::Lowpass, vec![40.0]),
            (FilterKind::Highpass, vec![5.0]),
            (FilterKind::Bandpass, vec![1.0, 40.0]),
            (FilterKind::Bandstop, vec![45.0, 55.0]),
        ];
        for (kind, cut) in cases {
            for order in 2..=8 {
                let f = design_butterworth(kind, &order_spec(order, &cut), fs).unwrap();
                assert!(f.is_stable());
                for i in 0..200 {
                    let freq = fs * (0.01 + 0.44 * i as f64 / 199.0);
                    let got = f.magnitude_db(freq);
                    let want = analytic_db(kind, order, &cut, fs, freq);
                    if want > -100.0 {
                        assert!((got - want).abs() < 0.05, "{kind:?} n={order} f={freq}: {got} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn nyquist_violation_names_half_fs() {
        let err = design_butterworth(FilterKind::Lowpass, &order_spec(4, &[130.0]), 256.0).unwrap_err();
        assert!(err.to_string().contains("128"), "{err}");
    }

    #[test]
    fn edges_path_meets_limits() {
        let spec = DesignSpec::Edges { passband: vec![30.0], stopband: vec![50.0], ripple_db: 1.0, attenuation_db: 40.0 };
        let f = design_butterworth(FilterKind::Lowpass, &spec, 250.0).unwrap();
        assert!(f.magnitude_db(30.0) >= -1.0 - 1e-9);
        assert!(f.magnitude_db(50.0) <= -40.0);
        let lower = design_butterworth(FilterKind::Lowpass, &order_spec(f.order - 1, &f.cutoffs), 250.0).unwrap();
        assert!(lower.magnitude_db(50.0) > -40.0);
        let spec = DesignSpec::Edges {
            passband: vec![8.0, 13.0],
            stopband: vec![5.0, 18.0],
            ripple_db: 1.0,
            attenuation_db: 30.0,
        };
        let f = design_butterworth(FilterKind::Bandpass, &spec, 250.0).unwrap();
        for e in [8.0, 13.0] {
            assert!(f.magnitude_db(e) >= -1.0 - 1e-6, "{}", f.magnitude_db(e));
        }
        for e in [5.0, 18.0] {
            assert!(f.magnitude_db(e) <= -30.0 + 1e-6, "{}", f.magnitude_db(e));
        }
        let bad = DesignSpec::Edges { passband: vec![30.0], stopband: vec![50.0], ripple_db: 3.0, attenuation_db: 2.0 };
        assert!(design_butterworth(FilterKind::Lowpass, &bad, 250.0).is_err());
    }

    #[test]
    fn tone_rejected_by_bandpass() {
        let f = design_butterworth(FilterKind::Bandpass, &order_spec(4, &[1.0, 40.0]), 250.0).unwrap();
        let single = analytic_db(FilterKind::Bandpass, 4, &[1.0, 40.0], 250.0, 50.0);
        assert!((f.magnitude_db(50.0) - single).abs() < 0.05);
        let x: Vec<f64> = (0..2500).map(|k| (2.0 * PI * 50.0 * k as f64 / 250.0).sin()).collect();
        let y = apply_filter(&[x.clone()], 250.0, &f, true).unwrap();
        let rms = |v: &[f64]| (v[500..2000].iter().map(|a| a * a).sum::<f64>() / 1500.0).sqrt();
        assert!(20.0 * (rms(&y[0]) / rms(&x)).log10() <= -12.0);
    }

    #[test]
    fn zero_in_zero_out_and_fs_check() {
        let f = design_butterworth(FilterKind::Highpass, &order_spec(3, &[1.0]), 100.0).unwrap();
        for zp in [false, true] {
            let y = apply_filter(&[vec![0.0; 300]], 100.0, &f, zp).unwrap();
            assert!(y[0].iter().all(|&v| v == 0.0));
        }
        assert!(matches!(apply_filter(&[vec![0.0; 10]], 200.0, &f, false), Err(Error::SamplingRateMismatch { .. })));
    }

    #[test]
    fn zero_phase_impulse_peak_in_place() {
        let f = design_butterworth(FilterKind::Lowpass, &order_spec(4, &[10.0]), 100.0).unwrap();
        let mut x = vec![0.0; 401];
        x[200] = 1.0;
        let y = filtfilt(&f, &x);
        let argmax = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
        assert_eq!(argmax, 200);
    }

    #[test]
    fn streaming_equals_one_shot() {
        let f = design_butterworth(FilterKind::Bandpass, &order_spec(4, &[8.0, 30.0]), 256.0).unwrap();
        let x: Vec<f64> = (0..1000).map(|k| ((k * 7919) % 97) as f64 - 48.0).collect();
        let whole = apply_filter(&[x.clone()], 256.0, &f, false).unwrap();
        let mut sf = StreamingFilter::new(f, 1);
        let mut out = Vec::new();
        for chunk in x.chunks(33) {
            let mut c = vec![chunk.to_vec()];
            sf.process(&mut c).unwrap();
            out.extend(c.remove(0));
        }
        assert_eq!(out, whole[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn zero_phase_reversal_symmetric(seed in any::<u64>(), n in 20usize..400) {
            let f = design_butterworth(FilterKind::Bandpass, &order_spec(3, &[5.0, 20.0]), 128.0).unwrap();
            let mut rng = crate::rng::seeded(seed);
            let x: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect();
            let mut rx = x.clone();
            rx.reverse();
            let mut y = filtfilt(&f, &x);
            y.reverse();
            prop_assert_eq!(filtfilt(&f, &rx), y);
        }

        #[test]
        fn designs_are_stable(order in 1usize..10, lo in 0.5f64..40.0, width in 1.0f64..60.0) {
            let fs = 256.0;
            for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
                let f = design_butterworth(kind, &order_spec(order, &[lo]), fs).unwrap();
                prop_assert!(f.is_stable());
            }
            for kind in [FilterKind::Bandpass, FilterKind::Bandstop] {
                let f = design_butterworth(kind, &order_spec(order, &[lo, lo + width]), fs).unwrap();
                prop_assert!(f.is_stable());
            }
        }
    }
}
