//! Least-squares removal of reference-channel (EOG) contamination.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCleaner {
    pub reference: Vec<usize>,
    /// `coefficients[r][c]`: weight of reference `r` in channel `c`; zero
    /// for reference channels themselves.
    pub coefficients: Vec<Vec<f64>>,
}

/// Fits `B = (RᵀR + 1e-8·I)⁻¹ RᵀX` on calibration data (`channels × samples`).
pub fn fit_regression_cleaner(calibration: &[Vec<f64>], reference: &[usize]) -> Result<RegressionCleaner> {
    let c = calibration.len();
    let t = calibration.first().map_or(0, Vec::len);
    if reference.is_empty() {
        return Err(Error::InvalidArgument("no reference channels given".into()));
    }
    if let Some(&bad) = reference.iter().find(|&&r| r >= c) {
        return Err(Error::InvalidArgument(format!("reference channel {bad} not present ({c} channels)")));
    }
    if t < 10 * reference.len() {
        return Err(Error::InvalidArgument(format!(
            "calibration has {t} samples, need at least {}",
            10 * reference.len()
        )));
    }
    let r = DMatrix::from_fn(t, reference.len(), |k, j| calibration[reference[j]][k]);
    let x = DMatrix::from_fn(t, c, |k, j| calibration[j][k]);
    let gram = r.transpose() * &r + DMatrix::identity(reference.len(), reference.len()) * RIDGE;
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;
    let b = chol.solve(&(r.transpose() * x));
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let coefficients = (0..reference.len())
        .map(|i| (0..c).map(|j| if reference.contains(&j) { 0.0 } else { b[(i, j)] }).collect())
        .collect();
    Ok(RegressionCleaner { reference: reference.to_vec(), coefficients })
}

/// `X - R·B` on non-reference channels; reference channels pass through.
pub fn regression_clean(data: &[Vec<f64>], cleaner: &RegressionCleaner) -> Result<Vec<Vec<f64>>> {
    let c = cleaner.coefficients.first().map_or(0, Vec::len);
    if data.len() != c {
        return Err(Error::DimensionMismatch { expected: c, got: data.len() });
    }
    let t = data[0].len();
    Ok((0..c)
        .map(|j| {
            if cleaner.reference.contains(&j) {
                return data[j].clone();
            }
            (0..t)
                .map(|k| {
                    let contamination: f64 = cleaner
                        .reference
                        .iter()
                        .zip(&cleaner.coefficients)
                        .map(|(&r, coef)| data[r][k] * coef[j])
                        .sum();
                    data[j][k] - contamination
                })
                .collect()
        })
        .collect())
}
