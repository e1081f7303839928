//! Fractal dimension, entropies and detrended fluctuation analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::stats::mean;

pub const HIGUCHI_KMAX: usize = 8;
pub const SHANNON_BINS: usize = 64;
pub const ENTROPY_M: usize = 2;
pub const ENTROPY_R: f64 = 0.2;
pub const DFA_SCALES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FractalMethod {
    Higuchi,
    Katz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    Shannon,
    Approximate,
    Sample,
}

/// Entropy value; `infinite` marks a sample entropy with no template matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub value: f64,
    pub infinite: bool,
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

pub fn fractal_dimension(x: &[f64], method: FractalMethod) -> Result<f64> {
    if x.len() < 32 {
        return Err(Error::InvalidArgument(format!("fractal dimension needs at least 32 samples, got {}", x.len())));
    }
    Ok(match method {
        FractalMethod::Higuchi => higuchi(x, HIGUCHI_KMAX),
        FractalMethod::Katz => katz(x),
    })
}

pub fn higuchi(x: &[f64], kmax: usize) -> f64 {
    let n = x.len();
    let mut log_inv_k = Vec::with_capacity(kmax);
    let mut log_l = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let mut total = 0.0;
        let mut count = 0usize;
        for m in 0..k {
            let steps = (n - m - 1) / k;
            if steps == 0 {
                continue;
            }
            let path: f64 = (1..=steps).map(|i| (x[m + i * k] - x[m + (i - 1) * k]).abs()).sum();
            total += path * (n - 1) as f64 / (steps * k) as f64 / k as f64;
            count += 1;
        }
        let l = total / count as f64;
        if l <= 0.0 {
            // Flat input: every curve length vanishes.
            return 1.0;
        }
        log_inv_k.push((1.0 / k as f64).ln());
        log_l.push(l.ln());
    }
    slope(&log_inv_k, &log_l)
}

pub fn katz(x: &[f64]) -> f64 {
    let path: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let d = x.iter().map(|v| (v - x[0]).abs()).fold(0.0, f64::max);
    if path <= 0.0 || d <= 0.0 {
        return 1.0;
    }
    let n = (x.len() - 1) as f64;
    n.log10() / (n.log10() + (d / path).log10())
}

pub fn shannon(x: &[f64], bins: usize) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for &v in x {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = x.len() as f64;
    counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n).map(|p| -p * p.log2()).sum()
}

fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn within(x: &[f64], i: usize, j: usize, m: usize, r: f64) -> bool {
    (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r)
}

pub fn approximate_entropy(x: &[f64], m: usize, r: f64) -> f64 {
    let phi = |m: usize| {
        let count = x.len() - m + 1;
        let total: f64 = (0..count)
            .map(|i| {
                let c = (0..count).filter(|&j| within(x, i, j, m, r)).count();
                (c as f64 / count as f64).ln()
            })
            .sum();
        total / count as f64
    };
    phi(m) - phi(m + 1)
}

/// Sample entropy over the `N - m` templates shared by both lengths.
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> EntropyValue {
    let count = x.len() - m;
    let (mut b, mut a) = (0u64, 0u64);
    for i in 0..count {
        for j in i + 1..count {
            if within(x, i, j, m, r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    if a == 0 || b == 0 {
        EntropyValue { value: f64::INFINITY, infinite: true }
    } else {
        EntropyValue { value: -(a as f64 / b as f64).ln(), infinite: false }
    }
}

pub fn entropy(x: &[f64], method: EntropyMethod) -> Result<EntropyValue> {
    let finite = |value| EntropyValue { value, infinite: false };
    match method {
        EntropyMethod::Shannon => {
            if x.is_empty() {
                return Err(Error::InvalidArgument("entropy of empty signal".into()));
            }
            Ok(finite(shannon(x, SHANNON_BINS)))
        }
        EntropyMethod::Approximate | EntropyMethod::Sample => {
            if x.len() < 64 {
                return Err(Error::InvalidArgument(format!("ApEn/SampEn need at least 64 samples, got {}", x.len())));
            }
            let r = ENTROPY_R * population_std(x);
            Ok(match method {
                EntropyMethod::Approximate => finite(approximate_entropy(x, ENTROPY_M, r)),
                _ => sample_entropy(x, ENTROPY_M, r),
            })
        }
    }
}

/// Finite stand-in for a sample entropy with no matches: the value one
/// matching pair would give, `ln` of the template pair count.
pub fn sample_entropy_cap(n: usize) -> f64 {
    let count = (n - ENTROPY_M) as f64;
    (count * (count - 1.0) / 2.0).ln()
}

pub fn dfa_scales(n: usize) -> Vec<usize> {
    let (lo, hi) = (4.0f64.ln(), (n as f64 / 4.0).ln());
    let mut scales: Vec<usize> = (0..DFA_SCALES)
        .map(|i| (lo + (hi - lo) * i as f64 / (DFA_SCALES - 1) as f64).exp().round() as usize)
        .collect();
    scales.dedup();
    scales
}

fn detrended_rss(y: &[f64]) -> f64 {
    let s = y.len() as f64;
    let tm = (s - 1.0) / 2.0;
    let ym = mean(y);
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        let dt = t as f64 - tm;
        sty += dt * (v - ym);
        stt += dt * dt;
    }
    let b = sty / stt;
    y.iter()
        .enumerate()
        .map(|(t, v)| {
            let e = v - (ym + b * (t as f64 - tm));
            e * e
        })
        .sum()
}

pub fn dfa(x: &[f64]) -> Result<f64> {
    if x.len() < 256 {
        return Err(Error::InvalidArgument(format!("dfa needs at least 256 samples, got {}", x.len())));
    }
    let mu = mean(x);
    let profile: Vec<f64> = x
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v - mu;
            Some(*acc)
        })
        .collect();
    let mut log_s = Vec::new();
    let mut log_f = Vec::new();
    for s in dfa_scales(x.len()) {
        let boxes = x.len() / s;
        let rss: f64 = (0..boxes).map(|b| detrended_rss(&profile[b * s..(b + 1) * s])).sum();
        let f = (rss / (boxes * s) as f64).sqrt();
        if f > 0.0 {
            log_s.push((s as f64).ln());
            log_f.push(f.ln());
        }
    }
    if log_s.len() < 2 {
        return Ok(0.0);
    }
    Ok(slope(&log_s, &log_f))
}
