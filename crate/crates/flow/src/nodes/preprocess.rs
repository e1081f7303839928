use serde_json::{json, Value as Json};

use noetic_core::preprocess::spatial::RejectedEpoch;
use noetic_core::preprocess::{
    apply_filter, common_average_reference, design_butterworth, fit_regression_cleaner, ica_clean, ica_fit,
    kaiser_window, regression_clean, reject_epochs_amplitude, DesignSpec, FilterKind, FilterSpec, RegressionCleaner,
    RejectRule, StreamingFilter,
};
use noetic_core::select::{score_channels, select_top_n, SelectMethod, SelectionReport};
use noetic_core::signal::{reindex, EpochSet, Marker};

use super::{err, BuildCtx, Ctx, Node, NodeResult, Params};
use crate::catalog::PortType;
use crate::value::{StreamChunk, Value};

fn single(inputs: Vec<Value>) -> NodeResult<Value> {
    inputs.into_iter().next().ok_or_else(|| "missing input".to_string())
}

fn map_epochs(set: EpochSet, mut f: impl FnMut(usize, &[Vec<f64>]) -> NodeResult<Vec<Vec<f64>>>) -> NodeResult<EpochSet> {
    let mut out = set.clone();
    for (i, e) in out.epochs.iter_mut().enumerate() {
        e.data = f(i, &e.data)?;
    }
    Ok(out)
}

pub struct SelectChannels {
    channels: Option<Vec<usize>>,
    method: Option<(SelectMethod, usize)>,
    report: Option<SelectionReport>,
}

impl SelectChannels {
    pub fn build(p: &Params<'_>, ctx: &BuildCtx<'_>) -> NodeResult<Self> {
        let channels: Option<Vec<usize>> = p.parse("channels")?;
        let method: Option<SelectMethod> = p.parse("method")?;
        let method = match method {
            Some(m) => {
                if ctx.input != Some(PortType::Epochs) {
                    return Err("ranked selection needs labeled epochs as input".into());
                }
                Some((m, p.parse("n")?.ok_or("method given without 'n'")?))
            }
            None => None,
        };
        if channels.is_none() == method.is_none() {
            return Err("give exactly one of 'channels' or 'method'".into());
        }
        if channels.as_ref().is_some_and(Vec::is_empty) {
            return Err("'channels' must not be empty".into());
        }
        Ok(Self { channels, method, report: None })
    }

    fn check(&self, idx: &[usize], n: usize) -> NodeResult<()> {
        match idx.iter().find(|&&c| c >= n) {
            Some(c) => Err(format!("channel {c} not present ({n} channels)")),
            None => Ok(()),
        }
    }
}

impl Node for SelectChannels {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let input = single(inputs)?;
        if self.channels.is_none() {
            let (method, n) = self.method.expect("built with a method");
            let Value::Epochs(set) = &input else {
                return Err("ranked selection needs epochs".into());
            };
            let labels = set.labels().map_err(err)?;
            let scores = score_channels(set, &labels, method).map_err(err)?;
            let chosen = select_top_n(&scores, n).map_err(err)?;
            self.report = Some(SelectionReport {
                method,
                chosen_names: chosen.iter().map(|&c| set.channels[c].name.clone()).collect(),
                scores: scores.scores,
                chosen: chosen.clone(),
            });
            self.channels = Some(chosen);
        }
        let idx = self.channels.clone().expect("channels resolved");
        Ok(Some(match input {
            Value::Raw(mut chunk) => {
                self.check(&idx, chunk.info.channels.len())?;
                chunk.samples = idx.iter().map(|&c| chunk.samples[c].clone()).collect();
                chunk.info.channels = reindex(idx.iter().map(|&c| chunk.info.channels[c].clone()));
                Value::Raw(chunk)
            }
            Value::Epochs(mut set) => {
                self.check(&idx, set.channels.len())?;
                set.channels = reindex(idx.iter().map(|&c| set.channels[c].clone()));
                for e in &mut set.epochs {
                    e.data = idx.iter().map(|&c| e.data[c].clone()).collect();
                }
                Value::Epochs(set)
            }
            other => return Err(format!("cannot select channels of {}", other.port_type().name())),
        }))
    }

    fn set_param(&mut self, name: &str, value: &Json) -> NodeResult<()> {
        if name != "channels" {
            return Err(format!("param '{name}' is not tunable"));
        }
        let idx: Vec<usize> = serde_json::from_value(value.clone()).map_err(err)?;
        if idx.is_empty() {
            return Err("'channels' must not be empty".into());
        }
        self.channels = Some(idx);
        Ok(())
    }

    fn report(&self) -> Option<Json> {
        Some(match &self.report {
            Some(r) => serde_json::to_value(r).expect("report serializes"),
            None => json!({ "chosen": self.channels }),
        })
    }
}

pub struct Butter {
    kind: FilterKind,
    design: DesignSpec,
    zero_phase: bool,
    spec: Option<FilterSpec>,
    state: Option<StreamingFilter>,
}

impl Butter {
    pub fn build(p: &Params<'_>, ctx: &BuildCtx<'_>) -> NodeResult<Self> {
        let kind: FilterKind = p.need("kind")?;
        let design = match (p.parse::<usize>("order")?, p.parse::<Vec<f64>>("cutoffs")?) {
            (Some(order), Some(cutoffs)) => DesignSpec::Order { order, cutoffs },
            (None, None) => DesignSpec::Edges {
                passband: p.parse("passband")?.ok_or("give 'order' and 'cutoffs', or 'passband' and 'stopband'")?,
                stopband: p.parse("stopband")?.ok_or("'passband' given without 'stopband'")?,
                ripple_db: p.need("ripple_db")?,
                attenuation_db: p.need("attenuation_db")?,
            },
            _ => return Err("'order' and 'cutoffs' must be given together".into()),
        };
        let zero_phase: bool = p.need("zero_phase")?;
        if zero_phase && ctx.input == Some(PortType::RawStream) {
            return Err("zero_phase filtering is non-causal; it is only allowed on epochs".into());
        }
        Ok(Self { kind, design, zero_phase, spec: None, state: None })
    }

    fn spec_for(&mut self, fs: f64) -> NodeResult<FilterSpec> {
        match &self.spec {
            Some(s) if s.fs == fs => Ok(s.clone()),
            _ => {
                let s = design_butterworth(self.kind, &self.design, fs).map_err(err)?;
                self.spec = Some(s.clone());
                self.state = None;
                Ok(s)
            }
        }
    }
}

impl Node for Butter {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        Ok(Some(match single(inputs)? {
            Value::Raw(mut chunk) => {
                let spec = self.spec_for(chunk.info.fs)?;
                let n = chunk.samples.len();
                let state = self.state.get_or_insert_with(|| StreamingFilter::new(spec.clone(), n));
                if state.n_channels() != n {
                    *state = StreamingFilter::new(spec, n);
                }
                state.process(&mut chunk.samples).map_err(err)?;
                Value::Raw(chunk)
            }
            Value::Epochs(set) => {
                let spec = self.spec_for(set.fs)?;
                let fs = set.fs;
                let zp = self.zero_phase;
                Value::Epochs(map_epochs(set, |_, d| apply_filter(d, fs, &spec, zp).map_err(err))?)
            }
            other => return Err(format!("cannot filter {}", other.port_type().name())),
        }))
    }

    fn set_param(&mut self, name: &str, value: &Json) -> NodeResult<()> {
        let (mut order, mut cutoffs) = match &self.design {
            DesignSpec::Order { order, cutoffs } => (*order, cutoffs.clone()),
            DesignSpec::Edges { .. } => match &self.spec {
                Some(s) => (s.order, s.cutoffs.clone()),
                None => return Err("filter not designed yet; order and cutoffs unknown".into()),
            },
        };
        match name {
            "order" => order = serde_json::from_value(value.clone()).map_err(err)?,
            "cutoffs" => cutoffs = serde_json::from_value(value.clone()).map_err(err)?,
            _ => return Err(format!("param '{name}' is not tunable")),
        }
        let design = DesignSpec::Order { order, cutoffs };
        if let Some(s) = &self.spec {
            self.spec = Some(design_butterworth(self.kind, &design, s.fs).map_err(err)?);
        }
        self.design = design;
        self.state = None;
        Ok(())
    }

    fn report(&self) -> Option<Json> {
        self.spec.as_ref().map(|s| json!({ "kind": s.kind, "order": s.order, "cutoffs": s.cutoffs, "fs": s.fs }))
    }
}

pub struct Car;

impl Node for Car {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        Ok(Some(match single(inputs)? {
            Value::Raw(mut chunk) => {
                if !chunk.is_empty() {
                    chunk.samples = common_average_reference(&chunk.samples).map_err(err)?;
                }
                Value::Raw(chunk)
            }
            Value::Epochs(set) => Value::Epochs(map_epochs(set, |_, d| common_average_reference(d).map_err(err))?),
            other => return Err(format!("cannot re-reference {}", other.port_type().name())),
        }))
    }
}

pub struct Kaiser {
    length: usize,
    beta: f64,
}

impl Kaiser {
    pub fn build(p: &Params<'_>) -> NodeResult<Self> {
        Ok(Self { length: p.need("length")?, beta: p.need("beta")? })
    }
}

impl Node for Kaiser {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Value::Epochs(set) = single(inputs)? else {
            return Err("expected epochs".into());
        };
        let (beta, length) = (self.beta, self.length);
        Ok(Some(Value::Epochs(map_epochs(set, |_, d| kaiser_window(d, beta, length).map_err(err))?)))
    }

    fn set_param(&mut self, name: &str, value: &Json) -> NodeResult<()> {
        match name {
            "beta" => {
                self.beta = serde_json::from_value(value.clone()).map_err(err)?;
                Ok(())
            }
            _ => Err(format!("param '{name}' is not tunable")),
        }
    }
}

pub struct Amplitude {
    threshold_uv: f64,
    seen: usize,
    kept: usize,
    rejected: Vec<RejectedEpoch>,
}

impl Amplitude {
    pub fn build(p: &Params<'_>) -> NodeResult<Self> {
        let threshold_uv: f64 = p.need("threshold_uv")?;
        if !(threshold_uv > 0.0) {
            return Err(format!("threshold_uv must be > 0, got {threshold_uv}"));
        }
        Ok(Self { threshold_uv, seen: 0, kept: 0, rejected: Vec::new() })
    }
}

impl Node for Amplitude {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Value::Epochs(set) = single(inputs)? else {
            return Err("expected epochs".into());
        };
        let (kept, report) = reject_epochs_amplitude(&set, self.threshold_uv).map_err(err)?;
        let offset = self.seen;
        self.seen += set.len();
        self.kept += report.kept;
        self.rejected.extend(report.rejected.into_iter().map(|mut r| {
            r.index += offset;
            r
        }));
        Ok((!kept.is_empty()).then_some(Value::Epochs(kept)))
    }

    fn set_param(&mut self, name: &str, value: &Json) -> NodeResult<()> {
        if name != "threshold_uv" {
            return Err(format!("param '{name}' is not tunable"));
        }
        let t: f64 = serde_json::from_value(value.clone()).map_err(err)?;
        if !(t > 0.0) {
            return Err(format!("threshold_uv must be > 0, got {t}"));
        }
        self.threshold_uv = t;
        Ok(())
    }

    fn report(&self) -> Option<Json> {
        Some(json!({ "threshold_uv": self.threshold_uv, "kept": self.kept, "rejected": self.rejected }))
    }
}

/// Fits on the first `calibration_s` seconds, then cleans everything,
/// including the calibration block itself.
pub struct Regression {
    reference: Vec<usize>,
    calibration_s: f64,
    cleaner: Option<RegressionCleaner>,
    held: Option<StreamChunk>,
}

impl Regression {
    pub fn build(p: &Params<'_>) -> NodeResult<Self> {
        let reference: Vec<usize> = p.need("reference")?;
        if reference.is_empty() {
            return Err("'reference' must name at least one channel".into());
        }
        let calibration_s: f64 = p.need("calibration_s")?;
        if !(calibration_s > 0.0) {
            return Err(format!("calibration_s must be > 0, got {calibration_s}"));
        }
        Ok(Self { reference, calibration_s, cleaner: None, held: None })
    }

    fn clean(&self, mut chunk: StreamChunk) -> NodeResult<StreamChunk> {
        if !chunk.is_empty() {
            chunk.samples = regression_clean(&chunk.samples, self.cleaner.as_ref().expect("fitted")).map_err(err)?;
        }
        Ok(chunk)
    }

    fn fit_and_release(&mut self) -> NodeResult<Option<Value>> {
        let held = self.held.take().expect("held samples");
        self.cleaner = Some(fit_regression_cleaner(&held.samples, &self.reference).map_err(err)?);
        Ok(Some(Value::Raw(self.clean(held)?)))
    }
}

fn split(chunk: StreamChunk, at: usize) -> (StreamChunk, StreamChunk) {
    let t_split = chunk.info.start_time + (chunk.start_index + at as u64) as f64 / chunk.info.fs;
    let (early, late): (Vec<Marker>, Vec<Marker>) = chunk.markers.iter().cloned().partition(|m| m.t < t_split);
    let head = StreamChunk {
        info: chunk.info.clone(),
        start_index: chunk.start_index,
        samples: chunk.samples.iter().map(|r| r[..at].to_vec()).collect(),
        markers: early,
    };
    let tail = StreamChunk {
        info: chunk.info,
        start_index: chunk.start_index + at as u64,
        samples: chunk.samples.iter().map(|r| r[at..].to_vec()).collect(),
        markers: late,
    };
    (head, tail)
}

impl Node for Regression {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Value::Raw(chunk) = single(inputs)? else {
            return Err("expected a raw stream".into());
        };
        if self.cleaner.is_some() {
            return Ok(Some(Value::Raw(self.clean(chunk)?)));
        }
        let need = (self.calibration_s * chunk.info.fs).round().max(1.0) as usize;
        let have = self.held.as_ref().map_or(0, StreamChunk::len);
        let take = (need - have).min(chunk.len());
        let (head, tail) = split(chunk, take);
        match &mut self.held {
            Some(h) => {
                for (row, src) in h.samples.iter_mut().zip(&head.samples) {
                    row.extend_from_slice(src);
                }
                h.markers.extend(head.markers);
            }
            None => self.held = Some(head),
        }
        if have + take < need {
            return Ok(None);
        }
        let Some(Value::Raw(mut out)) = self.fit_and_release()? else { unreachable!() };
        let tail = self.clean(tail)?;
        for (row, src) in out.samples.iter_mut().zip(&tail.samples) {
            row.extend_from_slice(src);
        }
        out.markers.extend(tail.markers);
        Ok(Some(Value::Raw(out)))
    }

    fn finish(&mut self, _ctx: &mut Ctx<'_>) -> NodeResult<Option<Value>> {
        if self.cleaner.is_none() && self.held.is_some() {
            return self.fit_and_release();
        }
        Ok(None)
    }

    fn report(&self) -> Option<Json> {
        self.cleaner.as_ref().map(|c| serde_json::to_value(c).expect("cleaner serializes"))
    }
}

/// Per-epoch FastICA; epoch `k` is unmixed with seed `seed + k`.
pub struct Ica {
    rule: RejectRule,
    seed: u64,
    count: u64,
    rejected: Vec<Vec<usize>>,
}

impl Ica {
    pub fn build(p: &Params<'_>, ctx: &BuildCtx<'_>) -> NodeResult<Self> {
        let mut rule = RejectRule::new(p.need("frontal")?);
        rule.kurtosis_threshold = p.need("kurtosis_threshold")?;
        rule.correlation_threshold = p.need("correlation_threshold")?;
        rule.template_threshold = p.need("template_threshold")?;
        rule.blink_template = p.parse("blink_template")?;
        Ok(Self { rule, seed: p.parse("seed")?.unwrap_or(ctx.seed), count: 0, rejected: Vec::new() })
    }
}

impl Node for Ica {
    fn process(&mut self, _ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        let Value::Epochs(set) = single(inputs)? else {
            return Err("expected epochs".into());
        };
        let base = self.count;
        self.count += set.len() as u64;
        let rule = self.rule.clone();
        let seed = self.seed;
        let mut rejected = Vec::new();
        let out = map_epochs(set, |i, d| {
            let model = ica_fit(d, seed.wrapping_add(base + i as u64)).map_err(err)?;
            let (clean, rej) = ica_clean(d, &model, &rule).map_err(err)?;
            rejected.push(rej);
            Ok(clean)
        })?;
        self.rejected.extend(rejected);
        Ok(Some(Value::Epochs(out)))
    }

    fn set_param(&mut self, name: &str, value: &Json) -> NodeResult<()> {
        let v: f64 = serde_json::from_value(value.clone()).map_err(err)?;
        match name {
            "kurtosis_threshold" => self.rule.kurtosis_threshold = v,
            "correlation_threshold" => self.rule.correlation_threshold = v,
            "template_threshold" => self.rule.template_threshold = v,
            _ => return Err(format!("param '{name}' is not tunable")),
        }
        Ok(())
    }

    fn report(&self) -> Option<Json> {
        Some(json!({ "seed": self.seed, "epochs": self.count, "rejected_components": self.rejected }))
    }
}
