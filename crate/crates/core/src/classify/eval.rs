//! Stratified cross-validation and accuracy, MCC and ITR metrics.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::model::{train, ClassifierKind, Hyperparams, TrainData};
use crate::error::{Error, Result};
use crate::{par, rng};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    /// `matrix[true][predicted]`.
    pub matrix: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub mcc: f64,
    /// False when the MCC denominator vanished and 0 was reported instead.
    pub mcc_defined: bool,
}

/// Confusion matrix, accuracy and multiclass (Gorodkin) MCC. Labels are
/// class indices in `0..n_classes`.
pub fn confusion_metrics(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Confusion> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch { expected: y_true.len(), got: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let mut matrix = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidArgument(format!("label {} outside 0..{n_classes}", t.max(p))));
        }
        matrix[t][p] += 1;
    }
    let s = y_true.len() as f64;
    let c: f64 = (0..n_classes).map(|k| matrix[k][k] as f64).sum();
    let t_k: Vec<f64> = (0..n_classes).map(|k| matrix[k].iter().sum::<u64>() as f64).collect();
    let p_k: Vec<f64> = (0..n_classes).map(|k| matrix.iter().map(|r| r[k]).sum::<u64>() as f64).collect();
    let cov_tp = c * s - t_k.iter().zip(&p_k).map(|(t, p)| t * p).sum::<f64>();
    let cov_pp = s * s - p_k.iter().map(|p| p * p).sum::<f64>();
    let cov_tt = s * s - t_k.iter().map(|t| t * t).sum::<f64>();
    let denom = (cov_pp * cov_tt).sqrt();
    let (mcc, mcc_defined) = if denom > 0.0 { (cov_tp / denom, true) } else { (0.0, false) };
    Ok(Confusion { matrix, accuracy: c / s, mcc, mcc_defined })
}

/// Wolpaw information transfer rate in bits per selection.
pub fn itr_bits_per_selection(n_classes: usize, accuracy: f64) -> f64 {
    let n = n_classes as f64;
    let p = accuracy.clamp(0.0, 1.0);
    let mut bits = n.log2();
    if p > 0.0 {
        bits += p * p.log2();
    }
    if p < 1.0 {
        bits += (1.0 - p) * ((1.0 - p) / (n - 1.0)).log2();
    }
    bits
}

/// Fold index per sample: indices sorted by label (stable), shuffled within
/// each class by a seeded substream, then dealt round-robin.
pub fn stratified_folds(labels: &[u32], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("fold count {k} must be in 2..={n}")));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if k != n {
        for &c in &classes {
            let count = labels.iter().filter(|&&l| l == c).count();
            if count < k {
                return Err(Error::InvalidArgument(format!("class {c} has {count} samples, fewer than {k} folds")));
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    for &c in &classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng::substream(seed, u64::from(c)));
        order.extend(members);
    }
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub predictions: Vec<u32>,
    pub accuracy: f64,
    pub mcc: f64,
    pub mcc_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: ClassifierKind,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub mean_mcc: f64,
}

pub fn cross_validate(kind: ClassifierKind, data: &TrainData, labels: &[u32], k: usize, hp: &Hyperparams) -> Result<CvReport> {
    if data.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: labels.len() });
    }
    let assignment = stratified_folds(labels, k, hp.seed)?;
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let index_of = |c: u32| classes.binary_search(&c).expect("label from training set");
    let folds = par::map_range(k, |f| -> Result<FoldResult> {
        let test: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
        let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
        let train_labels: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();
        let model = train(kind, &data.subset(&train_idx), &train_labels, hp)?;
        let predictions =
            test.iter().map(|&i| model.predict(data.sample(i)).map(|p| p.class_id)).collect::<Result<Vec<_>>>()?;
        let truth: Vec<usize> = test.iter().map(|&i| index_of(labels[i])).collect();
        let pred: Vec<usize> = predictions.iter().map(|&p| index_of(p)).collect();
        let m = confusion_metrics(&truth, &pred, classes.len())?;
        Ok(FoldResult { fold: f, test_indices: test, predictions, accuracy: m.accuracy, mcc: m.mcc, mcc_defined: m.mcc_defined })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let kf = k as f64;
    Ok(CvReport {
        kind,
        k,
        seed: hp.seed,
        mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / kf,
        mean_mcc: folds.iter().map(|f| f.mcc).sum::<f64>() / kf,
        folds,
    })
}
