//! Daubechies-4 discrete wavelet decomposition and subband log energies.

use crate::error::{Error, Result};

/// db4 reconstruction low-pass taps.
pub const DB4_REC_LO: [f64; 8] = [
    0.2303778133088964,
    0.7148465705529154,
    0.6308807679298587,
    -0.0279837694168599,
    -0.1870348117190931,
    0.0308413818355607,
    0.0328830116668852,
    -0.0105974017850690,
];

pub const ENERGY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Half-sample symmetric extension; output length `floor((N + L - 1) / 2)`.
    Symmetric,
    /// Circular extension; output length `N / 2`, orthogonal.
    Periodized,
}

fn analysis_filters() -> ([f64; 8], [f64; 8]) {
    let mut lo = DB4_REC_LO;
    lo.reverse();
    let l = lo.len();
    let mut hi = [0.0; 8];
    for j in 0..l {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        hi[j] = sign * lo[l - 1 - j];
    }
    (lo, hi)
}

fn symmetric_index(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// One analysis step: `(approximation, detail)`.
pub fn dwt_step(x: &[f64], boundary: Boundary) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = analysis_filters();
    let n = x.len() as i64;
    let l = lo.len();
    let out_len = match boundary {
        Boundary::Symmetric => (x.len() + l - 1) / 2,
        Boundary::Periodized => x.len() / 2,
    };
    let sample = |i: i64| match boundary {
        Boundary::Symmetric => x[symmetric_index(i, n)],
        Boundary::Periodized => x[i.rem_euclid(n) as usize],
    };
    let mut a = Vec::with_capacity(out_len);
    let mut d = Vec::with_capacity(out_len);
    for k in 0..out_len as i64 {
        let (mut sa, mut sd) = (0.0, 0.0);
        for j in 0..l {
            let v = sample(2 * k + 1 - j as i64);
            sa += lo[j] * v;
            sd += hi[j] * v;
        }
        a.push(sa);
        d.push(sd);
    }
    (a, d)
}

pub fn default_levels(n: usize) -> usize {
    let log2 = (usize::BITS - 1 - n.max(1).leading_zeros()) as usize;
    log2.saturating_sub(2).clamp(1, 5)
}

/// Detail coefficients per level (finest first) and the final approximation.
pub fn wavedec(x: &[f64], levels: usize, boundary: Boundary) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if levels == 0 || x.len() < (1usize << levels) {
        return Err(Error::InvalidArgument(format!(
            "{levels} levels too deep for {} samples (need at least 2^levels)",
            x.len()
        )));
    }
    let mut details = Vec::with_capacity(levels);
    let mut approx = x.to_vec();
    for _ in 0..levels {
        if boundary == Boundary::Periodized && approx.len() % 2 != 0 {
            return Err(Error::InvalidArgument("periodized mode needs length divisible by 2^levels".into()));
        }
        let (a, d) = dwt_step(&approx, boundary);
        details.push(d);
        approx = a;
    }
    Ok((details, approx))
}

/// `(names, ln(Σc² + 1e-12))` for each detail level then the approximation.
pub fn dwt_energies(x: &[f64], levels: Option<usize>) -> Result<(Vec<String>, Vec<f64>)> {
    let levels = levels.unwrap_or_else(|| default_levels(x.len()));
    let (details, approx) = wavedec(x, levels, Boundary::Symmetric)?;
    let energy = |c: &[f64]| (c.iter().map(|v| v * v).sum::<f64>() + ENERGY_FLOOR).ln();
    let mut names: Vec<String> = (1..=levels).map(|l| format!("dwt.d{l}")).collect();
    names.push(format!("dwt.a{levels}"));
    let mut values: Vec<f64> = details.iter().map(|d| energy(d)).collect();
    values.push(energy(&approx));
    Ok((names, values))
}
