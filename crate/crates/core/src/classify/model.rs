//! Gaussian naive Bayes, minimum distance to Riemannian mean, and
//! tangent-space logistic regression, with a versioned JSON model format.
//!
//! Model parameters are written as decimal strings with 17 significant
//! digits, which round-trip every `f64` exactly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::classify::riemann::{airm_distance, riemann_mean, tangent_vector, SpdMatrix, DEFAULT_SHRINKAGE};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;
pub const NB_VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Nb,
    Rmdm,
    TangentLinear,
}

impl ClassifierKind {
    pub fn uses_covariances(self) -> bool {
        !matches!(self, ClassifierKind::Nb)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(Self::Nb),
            "rmdm" => Ok(Self::Rmdm),
            "tangent_linear" | "tangent" => Ok(Self::TangentLinear),
            other => Err(Error::InvalidArgument(format!("unknown classifier kind '{other}' (nb, rmdm, tangent_linear)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub shrinkage: f64,
    pub l2: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { shrinkage: DEFAULT_SHRINKAGE, l2: 1e-3, learning_rate: 0.1, steps: 500, seed: 0 }
    }
}

/// Training inputs: feature rows or per-epoch covariances.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainData {
    Features(Vec<Vec<f64>>),
    Covariances(Vec<SpdMatrix>),
}

impl TrainData {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Features(r) => r.len(),
            TrainData::Covariances(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> TrainData {
        match self {
            TrainData::Features(r) => TrainData::Features(idx.iter().map(|&i| r[i].clone()).collect()),
            TrainData::Covariances(c) => TrainData::Covariances(idx.iter().map(|&i| c[i].clone()).collect()),
        }
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        match self {
            TrainData::Features(r) => Sample::Features(&r[i]),
            TrainData::Covariances(c) => Sample::Covariance(&c[i]),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Sample<'a> {
    Features(&'a [f64]),
    Covariance(&'a SpdMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_id: u32,
    /// One score per class in `classes` order; higher is more likely.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    Nb {
        #[serde(with = "dec")]
        means: Vec<Vec<f64>>,
        #[serde(with = "dec")]
        variances: Vec<Vec<f64>>,
        #[serde(with = "dec")]
        log_priors: Vec<f64>,
    },
    Rmdm {
        #[serde(with = "dec")]
        class_means: Vec<Vec<Vec<f64>>>,
    },
    TangentLinear {
        #[serde(with = "dec")]
        reference: Vec<Vec<f64>>,
        #[serde(with = "dec")]
        feature_mean: Vec<f64>,
        #[serde(with = "dec")]
        feature_scale: Vec<f64>,
        /// One row per one-vs-rest problem (a single row for two classes).
        #[serde(with = "dec")]
        weights: Vec<Vec<f64>>,
        #[serde(with = "dec")]
        bias: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub hyperparameters: BTreeMap<String, String>,
    #[serde(default)]
    pub feature_names: Vec<String>,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub version: u32,
    pub kind: ClassifierKind,
    pub classes: Vec<u32>,
    /// Feature dimension, or channel count for covariance models.
    pub dim: usize,
    pub params: ModelParams,
    pub meta: TrainingMeta,
}

/// Decimal-string encoding for nested `f64` containers.
mod dec {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::Value;

    pub trait Decimal: Sized {
        fn to_value(&self) -> Value;
        fn from_value(v: &Value) -> Result<Self, String>;
    }

    impl Decimal for f64 {
        fn to_value(&self) -> Value {
            Value::String(format!("{self:.16e}"))
        }
        fn from_value(v: &Value) -> Result<Self, String> {
            v.as_str().ok_or("expected decimal string")?.parse::<f64>().map_err(|e| e.to_string())
        }
    }

    impl<T: Decimal> Decimal for Vec<T> {
        fn to_value(&self) -> Value {
            Value::Array(self.iter().map(Decimal::to_value).collect())
        }
        fn from_value(v: &Value) -> Result<Self, String> {
            v.as_array().ok_or("expected array")?.iter().map(T::from_value).collect()
        }
    }

    pub fn serialize<T: Decimal, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        v.to_value().serialize(s)
    }

    pub fn deserialize<'de, T: Decimal, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let v = Value::deserialize(d)?;
        T::from_value(&v).map_err(D::Error::custom)
    }
}

fn class_list(labels: &[u32]) -> Result<Vec<u32>> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    if c.len() < 2 {
        return Err(Error::DegenerateLabels);
    }
    for &k in &c {
        if labels.iter().filter(|&&l| l == k).count() < 2 {
            return Err(Error::InvalidArgument(format!("class {k} has fewer than 2 training samples")));
        }
    }
    Ok(c)
}

/// Index of the best score; near-ties resolve to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * top.abs().max(1.0);
    scores.iter().position(|&s| s >= top - slack).unwrap_or(0)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on L2-regularized logistic loss from zero.
fn fit_logistic(x: &[Vec<f64>], y: &[f64], hp: &Hyperparams) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..hp.steps {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (row, &target) in x.iter().zip(y) {
            let z = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(z) - target;
            for (g, a) in gw.iter_mut().zip(row) {
                *g += err * a;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= hp.learning_rate * (g / n + hp.l2 * *wi);
        }
        b -= hp.learning_rate * gb / n;
    }
    (w, b)
}

fn hyper_map(kind: ClassifierKind, hp: &Hyperparams) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    match kind {
        ClassifierKind::Nb => {
            m.insert("variance_floor".into(), NB_VARIANCE_FLOOR.to_string());
        }
        ClassifierKind::Rmdm => {
            m.insert("shrinkage".into(), hp.shrinkage.to_string());
        }
        ClassifierKind::TangentLinear => {
            m.insert("shrinkage".into(), hp.shrinkage.to_string());
            m.insert("l2".into(), hp.l2.to_string());
            m.insert("learning_rate".into(), hp.learning_rate.to_string());
            m.insert("steps".into(), hp.steps.to_string());
        }
    }
    m
}

pub fn train(kind: ClassifierKind, data: &TrainData, labels: &[u32], hp: &Hyperparams) -> Result<ClassifierModel> {
    if data.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: labels.len() });
    }
    let classes = class_list(labels)?;
    let members = |k: u32| labels.iter().enumerate().filter(move |(_, &l)| l == k).map(|(i, _)| i);
    let (dim, params) = match (kind, data) {
        (ClassifierKind::Nb, TrainData::Features(rows)) => {
            let d = rows[0].len();
            if let Some(r) = rows.iter().find(|r| r.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            let mut means = Vec::new();
            let mut variances = Vec::new();
            let mut log_priors = Vec::new();
            for &k in &classes {
                let idx: Vec<usize> = members(k).collect();
                let n = idx.len() as f64;
                let mu: Vec<f64> = (0..d).map(|j| idx.iter().map(|&i| rows[i][j]).sum::<f64>() / n).collect();
                let var: Vec<f64> = (0..d)
                    .map(|j| {
                        let v = idx.iter().map(|&i| (rows[i][j] - mu[j]).powi(2)).sum::<f64>() / n;
                        v.max(NB_VARIANCE_FLOOR)
                    })
                    .collect();
                means.push(mu);
                variances.push(var);
                log_priors.push((n / rows.len() as f64).ln());
            }
            (d, ModelParams::Nb { means, variances, log_priors })
        }
        (ClassifierKind::Rmdm, TrainData::Covariances(covs)) => {
            let d = covs[0].dim();
            let class_means = classes
                .iter()
                .map(|&k| {
                    let set: Vec<SpdMatrix> = members(k).map(|i| covs[i].clone()).collect();
                    riemann_mean(&set).map(|(m, _)| m.to_rows())
                })
                .collect::<Result<Vec<_>>>()?;
            (d, ModelParams::Rmdm { class_means })
        }
        (ClassifierKind::TangentLinear, TrainData::Covariances(covs)) => {
            let d = covs[0].dim();
            let (reference, _) = riemann_mean(covs)?;
            let vectors = covs.iter().map(|c| tangent_vector(c, &reference)).collect::<Result<Vec<_>>>()?;
            let f = vectors[0].len();
            let n = vectors.len() as f64;
            let feature_mean: Vec<f64> = (0..f).map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n).collect();
            let feature_scale: Vec<f64> = (0..f)
                .map(|j| {
                    let s = (vectors.iter().map(|v| (v[j] - feature_mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                })
                .collect();
            let standardized: Vec<Vec<f64>> = vectors
                .iter()
                .map(|v| (0..f).map(|j| (v[j] - feature_mean[j]) / feature_scale[j]).collect())
                .collect();
            let targets: Vec<u32> = if classes.len() == 2 { vec![classes[1]] } else { classes.clone() };
            let mut weights = Vec::new();
            let mut bias = Vec::new();
            for k in targets {
                let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == k))).collect();
                let (w, b) = fit_logistic(&standardized, &y, hp);
                weights.push(w);
                bias.push(b);
            }
            (d, ModelParams::TangentLinear { reference: reference.to_rows(), feature_mean, feature_scale, weights, bias })
        }
        (kind, _) => {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} expects {} input",
                if kind.uses_covariances() { "covariance" } else { "feature" }
            )))
        }
    };
    Ok(ClassifierModel {
        version: MODEL_VERSION,
        kind,
        classes,
        dim,
        params,
        meta: TrainingMeta {
            seed: hp.seed,
            hyperparameters: hyper_map(kind, hp),
            feature_names: Vec::new(),
            n_train: labels.len(),
        },
    })
}

impl ClassifierModel {
    pub fn predict(&self, sample: Sample<'_>) -> Result<Prediction> {
        let scores = match (&self.params, sample) {
            (ModelParams::Nb { means, variances, log_priors }, Sample::Features(x)) => {
                if x.len() != self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
                }
                means
                    .iter()
                    .zip(variances)
                    .zip(log_priors)
                    .map(|((mu, var), lp)| {
                        lp + x
                            .iter()
                            .zip(mu)
                            .zip(var)
                            .map(|((v, m), s)| -0.5 * (2.0 * std::f64::consts::PI * s).ln() - (v - m).powi(2) / (2.0 * s))
                            .sum::<f64>()
                    })
                    .collect()
            }
            (ModelParams::Rmdm { class_means }, Sample::Covariance(c)) => {
                if c.dim() != self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, got: c.dim() });
                }
                class_means
                    .iter()
                    .map(|m| airm_distance(&SpdMatrix::from_rows(m)?, c).map(|d| -d))
                    .collect::<Result<Vec<_>>>()?
            }
            (ModelParams::TangentLinear { reference, feature_mean, feature_scale, weights, bias }, Sample::Covariance(c)) => {
                if c.dim() != self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, got: c.dim() });
                }
                let v = tangent_vector(c, &SpdMatrix::from_rows(reference)?)?;
                let z: Vec<f64> = (0..v.len()).map(|j| (v[j] - feature_mean[j]) / feature_scale[j]).collect();
                let logits: Vec<f64> =
                    weights.iter().zip(bias).map(|(w, b)| b + w.iter().zip(&z).map(|(a, x)| a * x).sum::<f64>()).collect();
                if self.classes.len() == 2 {
                    vec![-logits[0], logits[0]]
                } else {
                    logits
                }
            }
            _ => return Err(Error::InvalidArgument(format!("{:?} model received the wrong input kind", self.kind))),
        };
        Ok(Prediction { class_id: self.classes[argmax(&scores)], scores })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ClassifierModel = serde_json::from_str(text).map_err(|e| Error::Format(format!("model JSON: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", self.version)));
        }
        let k = self.classes.len();
        let ok = match (&self.params, self.kind) {
            (ModelParams::Nb { means, variances, log_priors }, ClassifierKind::Nb) => {
                means.len() == k
                    && variances.len() == k
                    && log_priors.len() == k
                    && means.iter().chain(variances).all(|r| r.len() == self.dim)
            }
            (ModelParams::Rmdm { class_means }, ClassifierKind::Rmdm) => {
                class_means.len() == k && class_means.iter().all(|m| m.len() == self.dim && m.iter().all(|r| r.len() == self.dim))
            }
            (ModelParams::TangentLinear { reference, feature_mean, feature_scale, weights, bias }, ClassifierKind::TangentLinear) => {
                let f = self.dim * (self.dim + 1) / 2;
                let rows = if k == 2 { 1 } else { k };
                reference.len() == self.dim
                    && feature_mean.len() == f
                    && feature_scale.len() == f
                    && weights.len() == rows
                    && bias.len() == rows
                    && weights.iter().all(|w| w.len() == f)
            }
            _ => false,
        };
        if !ok {
            return Err(Error::Format(format!("{:?} model parameters have inconsistent shapes", self.kind)));
        }
        Ok(())
    }
}
