//! Symmetric FastICA (tanh contrast) and component-rejection cleaning.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::stats::{excess_kurtosis, pearson};
use crate::linalg::{invsqrtm, sym_eig};

pub const TOLERANCE: f64 = 1e-4;
pub const MAX_ITER: usize = 200;
pub const WHITEN_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    pub mean: Vec<f64>,
    /// `k × channels`
    pub whitener: Vec<Vec<f64>>,
    /// `channels × k`
    pub dewhitener: Vec<Vec<f64>>,
    /// `k × k`, orthogonal, acting on whitened data.
    pub unmixing: Vec<Vec<f64>>,
    /// `channels × k`, columns are component topographies.
    pub mixing: Vec<Vec<f64>>,
    pub n_components: usize,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j])
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    invsqrtm(&(w * w.transpose())) * w
}

/// Fits on `channels × samples` data.
pub fn ica_fit(data: &[Vec<f64>], seed: u64) -> Result<IcaModel> {
    let c = data.len();
    let t = data.first().map_or(0, Vec::len);
    if c == 0 || t < 20 * c {
        return Err(Error::InvalidArgument(format!("ICA needs at least {} samples for {c} channels, got {t}", 20 * c)));
    }
    let mean: Vec<f64> = data.iter().map(|r| r.iter().sum::<f64>() / t as f64).collect();
    let x = DMatrix::from_fn(c, t, |i, k| data[i][k] - mean[i]);
    let cov = &x * x.transpose() / t as f64;
    let (d, e) = sym_eig(&cov);
    let dmax = d.max();
    if !(dmax > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let keep: Vec<usize> = (0..c).rev().filter(|&i| d[i] > WHITEN_CUTOFF * dmax).collect();
    let k = keep.len();
    let whitener = DMatrix::from_fn(k, c, |r, j| e[(j, keep[r])] / d[keep[r]].sqrt());
    let dewhitener = DMatrix::from_fn(c, k, |j, r| e[(j, keep[r])] * d[keep[r]].sqrt());
    let z = &whitener * &x;

    let mut rng = crate::rng::seeded(seed);
    let init = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = decorrelate(&init);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let y = &w * &z;
        let g = y.map(f64::tanh);
        let g_prime_mean: Vec<f64> =
            (0..k).map(|i| g.row(i).iter().map(|v| 1.0 - v * v).sum::<f64>() / t as f64).collect();
        let mut next = &g * z.transpose() / t as f64;
        for i in 0..k {
            for j in 0..k {
                next[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let next = decorrelate(&next);
        let change = (&next * w.transpose()).diagonal().iter().map(|v| (1.0 - v.abs()).abs()).fold(0.0, f64::max);
        w = next;
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }

    let mixing = &dewhitener * w.transpose();
    let mut order: Vec<usize> = (0..k).collect();
    let power: Vec<f64> = (0..k).map(|j| mixing.column(j).norm_squared()).collect();
    order.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    let mut w_sorted = DMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        let col = mixing.column(src);
        let imax = col.iamax();
        let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        w_sorted.set_row(dst, &(w.row(src) * sign));
    }
    let mixing = &dewhitener * w_sorted.transpose();
    Ok(IcaModel {
        mean,
        whitener: to_rows(&whitener),
        dewhitener: to_rows(&dewhitener),
        unmixing: to_rows(&w_sorted),
        mixing: to_rows(&mixing),
        n_components: k,
        iterations,
        converged,
        seed,
    })
}

impl IcaModel {
    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }

    /// `k × samples` component activations.
    pub fn sources(&self, data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if data.len() != self.n_channels() {
            return Err(Error::DimensionMismatch { expected: self.n_channels(), got: data.len() });
        }
        let t = data[0].len();
        let x = DMatrix::from_fn(data.len(), t, |i, k| data[i][k] - self.mean[i]);
        Ok(to_rows(&(to_matrix(&self.unmixing) * to_matrix(&self.whitener) * x)))
    }

    /// Mixes `sources` back to channels, dropping `rejected` components.
    pub fn reconstruct(&self, sources: &[Vec<f64>], rejected: &[usize]) -> Vec<Vec<f64>> {
        let t = sources.first().map_or(0, Vec::len);
        let s = DMatrix::from_fn(self.n_components, t, |i, k| if rejected.contains(&i) { 0.0 } else { sources[i][k] });
        let x = to_matrix(&self.mixing) * s;
        (0..self.n_channels()).map(|i| x.row(i).iter().map(|v| v + self.mean[i]).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRule {
    pub kurtosis_threshold: f64,
    pub correlation_threshold: f64,
    pub template_threshold: f64,
    /// Frontal or EOG-role channels used for the correlation test.
    pub frontal_channels: Vec<usize>,
    /// Calibration blink topography (one weight per channel), compared with
    /// each component's mixing column.
    pub blink_template: Option<Vec<f64>>,
}

impl RejectRule {
    pub fn new(frontal_channels: Vec<usize>) -> Self {
        Self {
            kurtosis_threshold: 5.0,
            correlation_threshold: 0.6,
            template_threshold: 0.7,
            frontal_channels,
            blink_template: None,
        }
    }
}

/// Components matching the rejection rule, in component order.
pub fn components_to_reject(data: &[Vec<f64>], sources: &[Vec<f64>], model: &IcaModel, rule: &RejectRule) -> Vec<usize> {
    (0..model.n_components)
        .filter(|&k| {
            let kurt = excess_kurtosis(&sources[k]);
            let frontal = rule
                .frontal_channels
                .iter()
                .filter(|&&c| c < data.len())
                .any(|&c| pearson(&sources[k], &data[c]).abs() > rule.correlation_threshold);
            let template = rule.blink_template.as_ref().is_some_and(|tpl| {
                let col: Vec<f64> = model.mixing.iter().map(|row| row[k]).collect();
                tpl.len() == col.len() && pearson(&col, tpl).abs() > rule.template_threshold
            });
            (kurt > rule.kurtosis_threshold && frontal) || template
        })
        .collect()
}

pub fn ica_clean(data: &[Vec<f64>], model: &IcaModel, rule: &RejectRule) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let sources = model.sources(data)?;
    let rejected = components_to_reject(data, &sources, model, rule);
    Ok((model.reconstruct(&sources, &rejected), rejected))
}
