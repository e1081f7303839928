//! Re-referencing, windowing and amplitude-based epoch rejection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Epoch, EpochSet};

pub const DEFAULT_KAISER_BETA: f64 = 8.6;

/// Subtracts the cross-channel mean from every sample.
pub fn common_average_reference(data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "common average reference needs at least 2 channels, got {}",
            data.len()
        )));
    }
    let n = data[0].len();
    let c = data.len() as f64;
    let means: Vec<f64> = (0..n).map(|k| data.iter().map(|row| row[k]).sum::<f64>() / c).collect();
    Ok(data.iter().map(|row| row.iter().zip(&means).map(|(v, m)| v - m).collect()).collect())
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..500 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Symmetric Kaiser window of length `len`.
pub fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    let m = (len - 1) as f64;
    let mut w: Vec<f64> = (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect();
    for n in 0..len / 2 {
        w[len - 1 - n] = w[n];
    }
    w
}

pub fn kaiser_window(data: &[Vec<f64>], beta: f64, length: usize) -> Result<Vec<Vec<f64>>> {
    let n = data.first().map_or(0, Vec::len);
    if n != length {
        return Err(Error::InvalidArgument(format!("kaiser length {length} does not match epoch length {n}")));
    }
    let w = kaiser(length, beta);
    Ok(data.iter().map(|row| row.iter().zip(&w).map(|(v, w)| v * w).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedEpoch {
    pub index: usize,
    pub marker_t: f64,
    pub channel: usize,
    pub peak_uv: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RejectionReport {
    pub threshold_uv: f64,
    pub kept: usize,
    pub rejected: Vec<RejectedEpoch>,
}

/// Largest `|sample|` and the channel it sits on.
pub fn peak(epoch: &Epoch) -> (usize, f64) {
    let mut best = (0, 0.0f64);
    for (c, row) in epoch.data.iter().enumerate() {
        for &v in row {
            if v.abs() > best.1 {
                best = (c, v.abs());
            }
        }
    }
    best
}

pub fn reject_epochs_amplitude(epochs: &EpochSet, threshold_uv: f64) -> Result<(EpochSet, RejectionReport)> {
    if !(threshold_uv > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be > 0, got {threshold_uv}")));
    }
    let mut kept = Vec::new();
    let mut report = RejectionReport { threshold_uv, kept: 0, rejected: Vec::new() };
    for (i, e) in epochs.epochs.iter().enumerate() {
        let (channel, peak_uv) = peak(e);
        if peak_uv > threshold_uv {
            report.rejected.push(RejectedEpoch { index: i, marker_t: e.marker_t, channel, peak_uv });
        } else {
            kept.push(e.clone());
        }
    }
    report.kept = kept.len();
    Ok((epochs.with_epochs(kept), report))
}
