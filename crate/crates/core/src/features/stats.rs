//! Moments and Hjorth parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Excess kurtosis, `m4/m2² - 3`.
    pub kurtosis: f64,
    /// Set when the variance is zero and the shape moments are reported as 0.
    pub degenerate: bool,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased variance, `1/(N-1)`.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

fn is_flat(m2: f64, mean: f64) -> bool {
    let scale = (f64::EPSILON * 16.0 * mean.abs()).powi(2);
    m2 <= scale
}

pub fn moments(x: &[f64]) -> Result<Moments> {
    if x.len() < 4 {
        return Err(Error::InvalidArgument(format!("moments need at least 4 samples, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mu = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let variance = m2 / (n - 1.0);
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if is_flat(m2, mu) {
        return Ok(Moments { mean: mu, variance: 0.0, skewness: 0.0, kurtosis: 0.0, degenerate: true });
    }
    Ok(Moments {
        mean: mu,
        variance,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2) - 3.0,
        degenerate: false,
    })
}

/// Excess kurtosis, 0 for a flat input.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    moments(x).map(|m| m.kurtosis).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hjorth {
    pub activity: f64,
    pub mobility: f64,
    pub complexity: f64,
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn hjorth(x: &[f64]) -> Result<Hjorth> {
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("hjorth needs at least 3 samples, got {}", x.len())));
    }
    let d1 = diff(x);
    let d2 = diff(&d1);
    let v0 = variance(x);
    let v1 = variance(&d1);
    let v2 = variance(&d2);
    if v0 <= 0.0 || v1 <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mobility = (v1 / v0).sqrt();
    let complexity = if d2.len() >= 2 { (v2 / v1).sqrt() / mobility } else { 0.0 };
    Ok(Hjorth { activity: v0, mobility, complexity })
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
