use serde_json::{json, Map, Value as Json};

use noetic_core::features::{csp_features, csp_fit, extract_matrix, welch_psd, CspModel, FeatureKind, FeatureMatrix};
use noetic_core::signal::EpochSet;

use super::{err, Ctx, Node, NodeResult, Params};
use crate::value::{FeatureBatch, SpectrumBatch, Value};

fn epochs(inputs: Vec<Value>) -> NodeResult<EpochSet> {
    match inputs.into_iter().next() {
        Some(Value::Epochs(set)) => Ok(set),
        _ => Err("expected epochs".into()),
    }
}

/// Builds the core feature description from a node kind and its params.
pub fn feature_kind(kind: &str, p: &Params<'_>) -> NodeResult<FeatureKind> {
    let family = kind.trim_start_matches("feature.");
    let mut obj = Map::new();
    obj.insert("family".into(), json!(family));
    for name in ["method", "bands", "relative", "levels", "band"] {
        if let Some(v) = p.get(name) {
            obj.insert(name.into(), v.clone());
        }
    }
    serde_json::from_value(Json::Object(obj)).map_err(|e| format!("invalid {family} parameters: {e}"))
}

pub struct Extract {
    kind: FeatureKind,
}

impl Extract {
    pub fn build(kind: &str, p: &Params<'_>) -> NodeResult<Self> {
        Ok(Self { kind: feature_kind(kind, p)? })
    }
}

impl Node for Extract {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let set = epochs(inputs)?;
        let matrix = extract_matrix(&set, &self.kind).map_err(err)?;
        Ok(Some(Value::Features(FeatureBatch { matrix, post_s: set.post_s })))
    }
}

/// CSP log-variance features; fits on the first batch when no filters are
/// supplied.
pub struct CspNode {
    pairs: usize,
    model: Option<CspModel>,
    fitted_here: bool,
}

impl CspNode {
    pub fn build(p: &Params<'_>) -> NodeResult<Self> {
        Ok(Self { pairs: p.need("pairs")?, model: p.parse("filters")?, fitted_here: false })
    }
}

impl Node for CspNode {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let set = epochs(inputs)?;
        if self.model.is_none() {
            let labels = set.labels().map_err(err)?;
            self.model = Some(csp_fit(&set.epochs, &labels, self.pairs).map_err(err)?);
            self.fitted_here = true;
        }
        let model = self.model.as_ref().expect("model");
        let mut matrix = FeatureMatrix::empty(Vec::new());
        for e in &set.epochs {
            let (names, values) = csp_features(&e.data, model).map_err(err)?;
            matrix.names = names;
            matrix.rows.push(values);
            matrix.labels.push(e.class_id);
            matrix.times.push(e.marker_t);
        }
        Ok(Some(Value::Features(FeatureBatch { matrix, post_s: set.post_s })))
    }

    fn report(&self) -> Option<Json> {
        self.fitted_here.then(|| json!({ "filters": self.model }))
    }
}

pub struct Concat;

impl Node for Concat {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let mut it = inputs.into_iter();
        match (it.next(), it.next()) {
            (Some(Value::Features(a)), Some(Value::Features(b))) => {
                if a.matrix.times != b.matrix.times {
                    return Err("feature batches cover different epochs".into());
                }
                let matrix = a.matrix.hstack(&b.matrix).map_err(err)?;
                Ok(Some(Value::Features(FeatureBatch { matrix, post_s: a.post_s })))
            }
            _ => Err("expected two feature batches".into()),
        }
    }
}

pub struct Welch;

impl Node for Welch {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let set = epochs(inputs)?;
        let mut batch = SpectrumBatch {
            freqs: Vec::new(),
            channels: set.channels.iter().map(|c| c.name.clone()).collect(),
            segments: Vec::new(),
            times: Vec::new(),
        };
        for e in &set.epochs {
            let mut seg = Vec::with_capacity(e.data.len());
            for row in &e.data {
                let s = welch_psd(row, set.fs).map_err(err)?;
                batch.freqs = s.freqs;
                seg.push(s.power);
            }
            batch.segments.push(seg);
            batch.times.push(e.marker_t);
        }
        Ok(Some(Value::Spectrum(batch)))
    }
}
