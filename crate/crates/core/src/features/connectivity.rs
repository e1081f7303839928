//! Pairwise channel connectivity: cross-correlation, coherence and the
//! phase slope index.
//!
//! Sign conventions: a positive cross-correlation lag means `y` lags `x`;
//! a positive phase slope index means `x` leads `y`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::spectral::{welch_csd, Band};
use crate::features::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityMethod {
    Xcorr,
    Coherence,
    Psi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Connectivity {
    pub value: f64,
    /// Lag in samples, xcorr only.
    pub lag: Option<i64>,
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 64 {
        return Err(Error::InvalidArgument(format!("connectivity needs at least 64 samples, got {}", x.len())));
    }
    for s in [x, y] {
        let m = mean(s);
        if s.iter().all(|v| (v - m).abs() == 0.0) {
            return Err(Error::ZeroVariance);
        }
    }
    Ok(())
}

/// Maximum of the normalized cross-correlation `Σ x[t]·y[t+lag] / (N σx σy)`.
pub fn xcorr(x: &[f64], y: &[f64]) -> Result<Connectivity> {
    check(x, y)?;
    let n = x.len();
    let size = (2 * n).next_power_of_two();
    let centered = |s: &[f64]| {
        let m = mean(s);
        let mut buf: Vec<Complex<f64>> = s.iter().map(|v| Complex::new(v - m, 0.0)).collect();
        buf.resize(size, Complex::new(0.0, 0.0));
        buf
    };
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fx = centered(x);
    let mut fy = centered(y);
    fwd.process(&mut fx);
    fwd.process(&mut fy);
    let mut prod: Vec<Complex<f64>> = fx.iter().zip(&fy).map(|(a, b)| a.conj() * b).collect();
    inv.process(&mut prod);
    let norm = |s: &[f64]| {
        let m = mean(s);
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt()
    };
    let denom = norm(x) * norm(y) * size as f64;
    let at = |lag: i64| prod[lag.rem_euclid(size as i64) as usize].re / denom;
    let mut best = (at(0), 0i64);
    for mag in 1..n as i64 {
        for lag in [-mag, mag] {
            let v = at(lag);
            if v > best.0 {
                best = (v, lag);
            }
        }
    }
    Ok(Connectivity { value: best.0, lag: Some(best.1) })
}

fn band_bins(freqs: &[f64], band: &Band) -> Vec<usize> {
    (0..freqs.len()).filter(|&k| freqs[k] >= band.lo && freqs[k] <= band.hi).collect()
}

/// Complex coherency `Sxy / sqrt(Sxx Syy)` with `Sxy = <X conj(Y)>`.
fn coherency(x: &[f64], y: &[f64], fs: f64) -> Result<(Vec<f64>, Vec<Complex<f64>>)> {
    let (freqs, sxx) = welch_csd(x, x, fs)?;
    let (_, syy) = welch_csd(y, y, fs)?;
    let (_, sxy) = welch_csd(x, y, fs)?;
    let c = (0..freqs.len())
        .map(|k| {
            let d = (sxx[k].re * syy[k].re).sqrt();
            if d > 0.0 {
                sxy[k].conj() / d
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    Ok((freqs, c))
}

pub fn coherence(x: &[f64], y: &[f64], fs: f64, band: &Band) -> Result<Connectivity> {
    check(x, y)?;
    let (freqs, c) = coherency(x, y, fs)?;
    let bins = band_bins(&freqs, band);
    if bins.is_empty() {
        return Err(Error::InvalidArgument(format!("band '{}' contains no frequency bins", band.name)));
    }
    let value = bins.iter().map(|&k| c[k].norm_sqr()).sum::<f64>() / bins.len() as f64;
    Ok(Connectivity { value, lag: None })
}

pub fn phase_slope_index(x: &[f64], y: &[f64], fs: f64, band: &Band) -> Result<Connectivity> {
    check(x, y)?;
    let (freqs, c) = coherency(x, y, fs)?;
    let bins = band_bins(&freqs, band);
    if bins.len() < 2 {
        return Err(Error::InvalidArgument(format!("band '{}' needs at least two frequency bins", band.name)));
    }
    let value: f64 = bins.windows(2).map(|w| (c[w[0]].conj() * c[w[1]]).im).sum();
    Ok(Connectivity { value, lag: None })
}

pub fn connectivity(x: &[f64], y: &[f64], fs: f64, method: ConnectivityMethod, band: &Band) -> Result<Connectivity> {
    match method {
        ConnectivityMethod::Xcorr => xcorr(x, y),
        ConnectivityMethod::Coherence => coherence(x, y, fs, band),
        ConnectivityMethod::Psi => phase_slope_index(x, y, fs, band),
    }
}
