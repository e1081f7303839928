//! Common spatial patterns for two-class epoch sets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance, sym_eig, EIG_FLOOR};
use crate::signal::Epoch;

pub const DEFAULT_PAIRS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspModel {
    /// `2m × channels`, ordered by eigenvalue descending.
    pub filters: Vec<Vec<f64>>,
    /// `channels × 2m`, pseudo-inverse of `filters`.
    pub patterns: Vec<Vec<f64>>,
    /// Whitened first-class variance fraction for each retained filter, in (0, 1).
    pub eigenvalues: Vec<f64>,
    pub classes: [u32; 2],
    pub m: usize,
}

fn normalized_cov(data: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let c = covariance(data);
    let tr = c.trace();
    if !(tr > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(c / tr)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn csp_fit(epochs: &[Epoch], labels: &[u32], m: usize) -> Result<CspModel> {
    if epochs.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: epochs.len(), got: labels.len() });
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    if classes.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "CSP is two-class, got {} classes; fit one-vs-rest pairs instead",
            classes.len()
        )));
    }
    let n_ch = epochs[0].n_channels();
    if m == 0 || 2 * m > n_ch {
        return Err(Error::InvalidArgument(format!("m = {m} must be in 1..={}", n_ch / 2)));
    }
    let mut means = [DMatrix::zeros(n_ch, n_ch), DMatrix::zeros(n_ch, n_ch)];
    let mut counts = [0usize; 2];
    for (e, &l) in epochs.iter().zip(labels) {
        if e.n_channels() != n_ch {
            return Err(Error::DimensionMismatch { expected: n_ch, got: e.n_channels() });
        }
        let k = usize::from(l == classes[1]);
        means[k] += normalized_cov(&e.data)?;
        counts[k] += 1;
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::InvalidArgument("CSP needs at least 2 epochs per class".into()));
    }
    for k in 0..2 {
        means[k] /= counts[k] as f64;
    }
    let composite = &means[0] + &means[1];
    let (d, u) = sym_eig(&composite);
    let inv_sqrt = DMatrix::from_diagonal(&d.map(|v| 1.0 / v.max(EIG_FLOOR).sqrt()));
    let whitener = inv_sqrt * u.transpose();
    let s_a = &whitener * &means[0] * whitener.transpose();
    let (lambda, b) = sym_eig(&s_a);
    let full = b.transpose() * &whitener;
    let order: Vec<usize> = (0..m).map(|i| n_ch - 1 - i).chain((0..m).rev()).collect();
    let selected = DMatrix::from_fn(2 * m, n_ch, |r, c| full[(order[r], c)]);
    let patterns = selected
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(format!("CSP pattern inverse: {e}")))?;
    Ok(CspModel {
        filters: rows(&selected),
        patterns: rows(&patterns),
        eigenvalues: order.iter().map(|&i| lambda[i]).collect(),
        classes: [classes[0], classes[1]],
        m,
    })
}

/// Variances of the spatially filtered signals.
pub fn filtered_variances(data: &[Vec<f64>], model: &CspModel) -> Result<Vec<f64>> {
    let n_ch = model.patterns.len();
    if data.len() != n_ch {
        return Err(Error::DimensionMismatch { expected: n_ch, got: data.len() });
    }
    let t = data[0].len();
    Ok(model
        .filters
        .iter()
        .map(|w| {
            let z: Vec<f64> = (0..t).map(|k| w.iter().zip(data).map(|(wi, row)| wi * row[k]).sum()).collect();
            crate::features::stats::variance(&z)
        })
        .collect())
}

/// `ln(var_i / Σ var)` for each filter, named `csp.{i}`.
pub fn csp_features(data: &[Vec<f64>], model: &CspModel) -> Result<(Vec<String>, Vec<f64>)> {
    let vars = filtered_variances(data, model)?;
    let total: f64 = vars.iter().sum();
    let k = vars.len();
    let values = if total > 0.0 {
        vars.iter().map(|v| (v.max(f64::MIN_POSITIVE) / total).ln()).collect()
    } else {
        vec![(1.0 / k as f64).ln(); k]
    };
    Ok(((0..k).map(|i| format!("csp.{i}")).collect(), values))
}
