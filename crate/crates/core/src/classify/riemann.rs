//! SPD covariance estimation and affine-invariant Riemannian geometry.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance, expm, invsqrtm, logm, sqrtm, sym_eig, symmetrize};

pub const DEFAULT_SHRINKAGE: f64 = 0.1;
pub const MEAN_TOLERANCE: f64 = 1e-8;
pub const MEAN_MAX_ITER: usize = 50;

/// Symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::NotSpd);
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-10 * scale {
            return Err(Error::NotSpd);
        }
        let m = symmetrize(&m);
        let (vals, _) = sym_eig(&m);
        if !(vals[0] > 0.0) || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd);
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSpd);
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `G·C·Gᵀ`
    pub fn congruence(&self, g: &DMatrix<f64>) -> Result<Self> {
        Self::new(symmetrize(&(g * &self.0 * g.transpose())))
    }

    /// Internal constructor for results that are SPD by construction.
    fn trusted(m: DMatrix<f64>) -> Self {
        Self(symmetrize(&m))
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SpdMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Shrunk sample covariance of `channels × samples` data.
pub fn epoch_covariance(data: &[Vec<f64>], shrinkage: f64) -> Result<SpdMatrix> {
    let c = data.len();
    let t = data.first().map_or(0, Vec::len);
    if t <= c {
        return Err(Error::InvalidArgument(format!("covariance needs more samples ({t}) than channels ({c})")));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidArgument(format!("shrinkage {shrinkage} outside [0, 1]")));
    }
    let cov = covariance(data);
    let target = cov.trace() / c as f64;
    let mut shrunk = cov * (1.0 - shrinkage);
    for i in 0..c {
        shrunk[(i, i)] += shrinkage * target;
    }
    if !(target > 0.0) {
        // Flat epoch: fall back to a tiny identity so downstream logs stay finite.
        return Ok(SpdMatrix::trusted(DMatrix::identity(c, c) * 1e-12));
    }
    SpdMatrix::new(shrunk)
}

/// Affine-invariant distance `sqrt(Σ ln² λ_k)` over the eigenvalues of
/// `A^{-1/2} B A^{-1/2}`.
pub fn airm_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let isq = invsqrtm(&a.0);
    let (vals, _) = sym_eig(&(&isq * &b.0 * &isq));
    if vals.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotSpd);
    }
    Ok(vals.iter().map(|v| v.ln().powi(2)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Fréchet mean under the affine-invariant metric, by fixed-point iteration
/// from the arithmetic mean.
pub fn riemann_mean(set: &[SpdMatrix]) -> Result<(SpdMatrix, MeanReport)> {
    let first = set.first().ok_or_else(|| Error::InvalidArgument("mean of an empty set".into()))?;
    let n = first.dim();
    if let Some(bad) = set.iter().find(|m| m.dim() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: bad.dim() });
    }
    let mut m = set.iter().fold(DMatrix::zeros(n, n), |acc, c| acc + &c.0) / set.len() as f64;
    let mut report = MeanReport { iterations: 0, residual: f64::INFINITY, converged: false };
    for it in 1..=MEAN_MAX_ITER {
        let sq = sqrtm(&m);
        let isq = invsqrtm(&m);
        let mean_log = set.iter().fold(DMatrix::zeros(n, n), |acc, c| acc + logm(&(&isq * &c.0 * &isq)))
            / set.len() as f64;
        let residual = mean_log.norm();
        report = MeanReport { iterations: it, residual, converged: residual < MEAN_TOLERANCE };
        if report.converged {
            break;
        }
        m = symmetrize(&(&sq * expm(&mean_log) * &sq));
    }
    Ok((SpdMatrix::trusted(m), report))
}

/// Upper triangle (row-major) of `log(M^{-1/2} C M^{-1/2})`, off-diagonal
/// entries weighted by √2 so the Euclidean norm equals the AIRM distance.
pub fn tangent_vector(c: &SpdMatrix, reference: &SpdMatrix) -> Result<Vec<f64>> {
    if c.dim() != reference.dim() {
        return Err(Error::DimensionMismatch { expected: reference.dim(), got: c.dim() });
    }
    let isq = invsqrtm(&reference.0);
    let l = logm(&(&isq * &c.0 * &isq));
    let n = c.dim();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(if i == j { l[(i, j)] } else { std::f64::consts::SQRT_2 * l[(i, j)] });
        }
    }
    Ok(out)
}
