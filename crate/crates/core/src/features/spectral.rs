//! Welch periodograms, band powers and the short-time Fourier transform.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WELCH_SEGMENT: usize = 256;
pub const STFT_WINDOW: usize = 128;
pub const STFT_HOP: usize = 64;
pub const RELATIVE_RANGE: (f64, f64) = (1.0, 45.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMethod {
    pub window: String,
    pub segment: usize,
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub method: SpectrumMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), lo, hi }
    }
}

pub fn default_bands() -> Vec<Band> {
    vec![
        Band::new("delta", 1.0, 4.0),
        Band::new("theta", 4.0, 8.0),
        Band::new("alpha", 8.0, 13.0),
        Band::new("beta", 13.0, 30.0),
        Band::new("gamma", 30.0, 45.0),
    ]
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect()
}

fn forward_fft(buf: &mut [Complex<f64>]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// Segment starts for Welch averaging with 50% overlap.
fn segments(n: usize) -> (usize, Vec<usize>) {
    let seg = n.min(WELCH_SEGMENT);
    let step = (seg - seg / 2).max(1);
    let starts = (0..).map(|k| k * step).take_while(|s| s + seg <= n).collect();
    (seg, starts)
}

fn windowed_fft(x: &[f64], win: &[f64]) -> Vec<Complex<f64>> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().zip(win).map(|(v, w)| Complex::new((v - mean) * w, 0.0)).collect();
    forward_fft(&mut buf);
    buf
}

fn one_sided_factor(k: usize, seg: usize) -> f64 {
    if k == 0 || (seg % 2 == 0 && k == seg / 2) {
        1.0
    } else {
        2.0
    }
}

/// Averaged one-sided cross spectral density `conj(X)·Y`; `x == y` gives the PSD.
pub fn welch_csd(x: &[f64], y: &[f64], fs: f64) -> Result<(Vec<f64>, Vec<Complex<f64>>)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 8 {
        return Err(Error::InvalidArgument(format!("welch needs at least 8 samples, got {}", x.len())));
    }
    let (seg, starts) = segments(x.len());
    let win = hann(seg);
    let scale = 1.0 / (fs * win.iter().map(|w| w * w).sum::<f64>());
    let nf = seg / 2 + 1;
    let mut acc = vec![Complex::new(0.0, 0.0); nf];
    for &s in &starts {
        let fx = windowed_fft(&x[s..s + seg], &win);
        let fy = if std::ptr::eq(x, y) { fx.clone() } else { windowed_fft(&y[s..s + seg], &win) };
        for k in 0..nf {
            acc[k] += fx[k].conj() * fy[k];
        }
    }
    let count = starts.len() as f64;
    let freqs = (0..nf).map(|k| k as f64 * fs / seg as f64).collect();
    let csd = acc.iter().enumerate().map(|(k, v)| v * (scale * one_sided_factor(k, seg) / count)).collect();
    Ok((freqs, csd))
}

pub fn welch_psd(x: &[f64], fs: f64) -> Result<Spectrum> {
    let (freqs, csd) = welch_csd(x, x, fs)?;
    let (seg, _) = segments(x.len());
    Ok(Spectrum {
        freqs,
        power: csd.iter().map(|c| c.re.max(0.0)).collect(),
        method: SpectrumMethod { window: "hann".into(), segment: seg, overlap: seg / 2 },
    })
}

/// One-sided amplitude spectrum `|X_k|·c_k/n` of the mean-removed signal
/// (rectangular window).
pub fn amplitude_spectrum(x: &[f64], fs: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!("spectrum needs at least 2 samples, got {}", x.len())));
    }
    let n = x.len();
    let buf = windowed_fft(x, &vec![1.0; n]);
    let nf = n / 2 + 1;
    let freqs = (0..nf).map(|k| k as f64 * fs / n as f64).collect();
    let mags = (0..nf).map(|k| buf[k].norm() * one_sided_factor(k, n) / n as f64).collect();
    Ok((freqs, mags))
}

/// Trapezoidal integral of the piecewise-linear spectrum over `[lo, hi]`.
pub fn integrate(spec: &Spectrum, lo: f64, hi: f64) -> f64 {
    let f = &spec.freqs;
    let p = &spec.power;
    let mut area = 0.0;
    for i in 0..f.len().saturating_sub(1) {
        let a = f[i].max(lo);
        let b = f[i + 1].min(hi);
        if a >= b {
            continue;
        }
        let interp = |x: f64| p[i] + (p[i + 1] - p[i]) * (x - f[i]) / (f[i + 1] - f[i]);
        area += (b - a) * (interp(a) + interp(b)) / 2.0;
    }
    area
}

/// Band powers named `{band}.pow` or `{band}.relpow`.
pub fn band_powers(spec: &Spectrum, bands: &[Band], relative: bool) -> Result<(Vec<String>, Vec<f64>)> {
    let fmin = spec.freqs.first().copied().unwrap_or(0.0);
    let fmax = spec.freqs.last().copied().unwrap_or(0.0);
    for b in bands {
        if !(b.hi > b.lo) {
            return Err(Error::InvalidArgument(format!("band '{}' is empty ({}..{} Hz)", b.name, b.lo, b.hi)));
        }
        if b.lo < fmin || b.hi > fmax + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "band '{}' ({}..{} Hz) outside spectrum range {fmin}..{fmax} Hz",
                b.name, b.lo, b.hi
            )));
        }
    }
    let total = if relative { integrate(spec, RELATIVE_RANGE.0, RELATIVE_RANGE.1.min(fmax)) } else { 1.0 };
    let suffix = if relative { "relpow" } else { "pow" };
    let names = bands.iter().map(|b| format!("{}.{suffix}", b.name)).collect();
    let values = bands
        .iter()
        .map(|b| {
            let p = integrate(spec, b.lo, b.hi);
            if relative {
                if total > 0.0 {
                    p / total
                } else {
                    0.0
                }
            } else {
                p
            }
        })
        .collect();
    Ok((names, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stft {
    pub freqs: Vec<f64>,
    pub times: Vec<f64>,
    /// `frames × freqs` magnitudes.
    pub magnitudes: Vec<Vec<f64>>,
}

pub fn stft_frame_count(n: usize) -> usize {
    if n < STFT_WINDOW {
        0
    } else {
        (n - STFT_WINDOW) / STFT_HOP + 1
    }
}

pub fn stft(x: &[f64], fs: f64) -> Result<Stft> {
    if x.len() < STFT_WINDOW {
        return Err(Error::InvalidArgument(format!("stft needs at least {STFT_WINDOW} samples, got {}", x.len())));
    }
    let win = hann(STFT_WINDOW);
    let nf = STFT_WINDOW / 2 + 1;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(STFT_WINDOW);
    let frames = stft_frame_count(x.len());
    let mut magnitudes = Vec::with_capacity(frames);
    let mut times = Vec::with_capacity(frames);
    for f in 0..frames {
        let s = f * STFT_HOP;
        let mut buf: Vec<Complex<f64>> =
            x[s..s + STFT_WINDOW].iter().zip(&win).map(|(v, w)| Complex::new(v * w, 0.0)).collect();
        fft.process(&mut buf);
        magnitudes.push(buf[..nf].iter().map(|c| c.norm()).collect());
        times.push((s as f64 + STFT_WINDOW as f64 / 2.0) / fs);
    }
    let freqs = (0..nf).map(|k| k as f64 * fs / STFT_WINDOW as f64).collect();
    Ok(Stft { freqs, times, magnitudes })
}
