//! Symmetric-matrix functions via eigendecomposition.
//!
//! `log`, `sqrt` and inverse square root clamp eigenvalues at
//! [`EIG_FLOOR`]; every clamp is counted in a process-wide counter readable
//! with [`clamp_events`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::sync::atomic::{AtomicU64, Ordering};

pub const EIG_FLOOR: f64 = 1e-12;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenpairs sorted by ascending eigenvalue, each eigenvector signed so its
/// largest-magnitude entry is positive.
pub fn sym_eig(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let (imax, _) = col.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
            if v.abs() > acc.1 + 1e-14 {
                (i, v.abs())
            } else {
                acc
            }
        });
        if col[imax] < 0.0 {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// `V diag(f(λ)) Vᵀ`.
pub fn sym_apply(m: &DMatrix<f64>, clamp: bool, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eig(m);
    let mapped = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| {
            let v = if clamp && v < EIG_FLOOR {
                CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
                EIG_FLOOR
            } else {
                v
            };
            f(v)
        }),
    );
    symmetrize(&(&vecs * DMatrix::from_diagonal(&mapped) * vecs.transpose()))
}

pub fn sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, true, f64::sqrt)
}

pub fn invsqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, true, |v| 1.0 / v.sqrt())
}

pub fn logm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, true, f64::ln)
}

pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, false, f64::exp)
}

pub fn invm(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, true, |v| 1.0 / v)
}

/// Rows-as-channels sample covariance with means removed, `XXᵀ/(T-1)`.
pub fn covariance(data: &[Vec<f64>]) -> DMatrix<f64> {
    let c = data.len();
    let t = data.first().map_or(0, Vec::len);
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / t as f64;
            row.iter().map(|v| v - mean).collect()
        })
        .collect();
    let denom = (t.max(2) - 1) as f64;
    let mut cov = DMatrix::zeros(c, c);
    for i in 0..c {
        for j in i..c {
            let s: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / denom;
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    cov
}
