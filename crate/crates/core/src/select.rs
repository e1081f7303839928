//! Channel relevance scoring and top-n selection.
//!
//! Correlation, mutual information and chi-squared operate on per-epoch
//! log-variance scalars. The CSP score standardizes each channel by its pooled
//! standard deviation, fits three filter pairs, and weights each pattern by how
//! far its eigenvalue departs from the balanced value 1/2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::csp::{csp_fit, DEFAULT_PAIRS};
use crate::features::stats::{pearson, variance};
use crate::signal::{Epoch, EpochSet};

pub const VARIANCE_FLOOR: f64 = 1e-12;
pub const N_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMethod {
    Correlation,
    MutualInformation,
    ChiSquared,
    Csp,
}

impl SelectMethod {
    pub const ALL: [SelectMethod; 4] =
        [SelectMethod::Correlation, SelectMethod::MutualInformation, SelectMethod::ChiSquared, SelectMethod::Csp];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScores {
    pub method: SelectMethod,
    pub scores: Vec<f64>,
    pub n_epochs: usize,
}

/// `epochs × channels` matrix of `ln(var + 1e-12)`.
pub fn channel_scalars(epochs: &EpochSet) -> Result<Vec<Vec<f64>>> {
    if epochs.is_empty() {
        return Err(Error::InvalidArgument("channel scalars need at least one epoch".into()));
    }
    Ok(epochs
        .epochs
        .iter()
        .map(|e| e.data.iter().map(|row| (variance(row) + VARIANCE_FLOOR).ln()).collect())
        .collect())
}

fn distinct(labels: &[u32]) -> Vec<u32> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Equal-frequency bins by rank; equal values share the bin of their first
/// occurrence in sorted order.
pub fn rank_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    let mut prev: Option<(f64, usize)> = None;
    for (rank, &i) in order.iter().enumerate() {
        let bin = match prev {
            Some((v, b)) if v == x[i] => b,
            _ => rank * bins / n,
        };
        out[i] = bin;
        prev = Some((x[i], bin));
    }
    out
}

fn contingency(bins: &[usize], labels: &[u32], classes: &[u32]) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; classes.len()]; N_BINS];
    for (&b, l) in bins.iter().zip(labels) {
        let c = classes.binary_search(l).expect("label in class list");
        table[b][c] += 1.0;
    }
    table
}

fn entropy_bits(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0.0).map(|c| c / n).map(|p| -p * p.log2()).sum()
}

/// Plug-in `I(X;Y) = H(X) + H(Y) - H(X,Y)` in bits.
pub fn mutual_information(table: &[Vec<f64>]) -> f64 {
    let n: f64 = table.iter().flatten().sum();
    let rows = table.iter().map(|r| r.iter().sum::<f64>());
    let cols = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum::<f64>());
    let joint = table.iter().flatten().copied();
    (entropy_bits(rows, n) + entropy_bits(cols, n) - entropy_bits(joint, n)).max(0.0)
}

/// `Σ (O - E)² / E` over cells with nonzero expectation.
pub fn chi_squared(table: &[Vec<f64>]) -> f64 {
    let n: f64 = table.iter().flatten().sum();
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &o) in r.iter().enumerate() {
            let e = rows[i] * cols[j] / n;
            if e > 0.0 {
                chi += (o - e) * (o - e) / e;
            }
        }
    }
    chi
}

fn csp_scores(epochs: &EpochSet, labels: &[u32]) -> Result<Vec<f64>> {
    let n_ch = epochs.channels.len();
    let pooled: Vec<f64> = (0..n_ch)
        .map(|c| {
            let (mut s, mut s2, mut n) = (0.0, 0.0, 0.0);
            for e in &epochs.epochs {
                for &v in &e.data[c] {
                    s += v;
                    s2 += v * v;
                    n += 1.0;
                }
            }
            let m = s / n;
            (s2 / n - m * m).max(0.0).sqrt()
        })
        .collect();
    let scaled: Vec<Epoch> = epochs
        .epochs
        .iter()
        .map(|e| Epoch {
            data: e
                .data
                .iter()
                .zip(&pooled)
                .map(|(row, &sd)| {
                    let k = if sd > 0.0 { 1.0 / sd } else { 1.0 };
                    row.iter().map(|v| v * k).collect()
                })
                .collect(),
            class_id: e.class_id,
            marker_t: e.marker_t,
        })
        .collect();
    let m = DEFAULT_PAIRS.min(n_ch / 2).max(1);
    let model = csp_fit(&scaled, labels, m)?;
    let weights: Vec<f64> = model
        .eigenvalues
        .iter()
        .map(|&l| {
            let l = l.clamp(1e-12, 1.0 - 1e-12);
            (l / (1.0 - l)).ln().abs()
        })
        .collect();
    Ok(model
        .patterns
        .iter()
        .map(|row| row.iter().zip(&weights).map(|(a, w)| a.abs() * w).fold(0.0, f64::max))
        .collect())
}

pub fn score_channels(epochs: &EpochSet, labels: &[u32], method: SelectMethod) -> Result<ChannelScores> {
    if labels.len() != epochs.len() {
        return Err(Error::DimensionMismatch { expected: epochs.len(), got: labels.len() });
    }
    let classes = distinct(labels);
    if classes.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    if epochs.len() < 4 {
        return Err(Error::InvalidArgument(format!("channel scoring needs at least 4 epochs, got {}", epochs.len())));
    }
    let scores = match method {
        SelectMethod::Csp => {
            if classes.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "csp scoring needs exactly 2 classes, got {}",
                    classes.len()
                )));
            }
            csp_scores(epochs, labels)?
        }
        _ => {
            let scalars = channel_scalars(epochs)?;
            let n_ch = epochs.channels.len();
            crate::par::map_range(n_ch, |c| {
                let col: Vec<f64> = scalars.iter().map(|r| r[c]).collect();
                match method {
                    SelectMethod::Correlation => {
                        let pairs: &[u32] = if classes.len() == 2 { &classes[..1] } else { &classes };
                        pairs
                            .iter()
                            .map(|&k| {
                                let ind: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == k))).collect();
                                pearson(&col, &ind).abs()
                            })
                            .fold(0.0, f64::max)
                    }
                    SelectMethod::MutualInformation => {
                        mutual_information(&contingency(&rank_bins(&col, N_BINS), labels, &classes))
                    }
                    SelectMethod::ChiSquared => chi_squared(&contingency(&rank_bins(&col, N_BINS), labels, &classes)),
                    SelectMethod::Csp => unreachable!(),
                }
            })
        }
    };
    Ok(ChannelScores { method, scores, n_epochs: epochs.len() })
}

/// Indices of the `n` best channels, best first; ties go to the lower index.
pub fn select_top_n(scores: &ChannelScores, n: usize) -> Result<Vec<usize>> {
    let c = scores.scores.len();
    if n == 0 || n > c {
        return Err(Error::InvalidArgument(format!("n = {n} must be in 1..={c}")));
    }
    let mut idx: Vec<usize> = (0..c).collect();
    idx.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]).then(a.cmp(&b)));
    idx.truncate(n);
    Ok(idx)
}

/// Report emitted by the `select` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: SelectMethod,
    pub scores: Vec<f64>,
    pub chosen: Vec<usize>,
    pub chosen_names: Vec<String>,
}
