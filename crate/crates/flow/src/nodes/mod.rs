//! Runtime node implementations, one per catalog kind.
//!
//! Every node is chunk-invariant: feeding a stream in one piece or in many
//! pieces yields the same samples, epochs and decisions.

mod classify;
mod epoch;
mod feature;
mod preprocess;
mod sink;
mod source;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

use crate::catalog::{NodeSpec, PortType};
use crate::value::{Event, PlotFrame, Value};

pub use sink::SinkOutput;
pub use source::{load_source, recording_chunk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Offline,
    Online,
}

/// Side outputs collected during one engine tick.
#[derive(Debug, Default, Clone)]
pub struct Emitted {
    pub plots: Vec<PlotFrame>,
    pub events: Vec<Event>,
}

impl Emitted {
    pub fn extend(&mut self, other: Emitted) {
        self.plots.extend(other.plots);
        self.events.extend(other.events);
    }
}

pub struct Ctx<'a> {
    pub mode: Mode,
    pub session: &'a str,
    pub node: &'a str,
    /// `t0` of the input frame being processed.
    pub source_t0: f64,
    pub out: &'a mut Emitted,
}

pub type NodeResult<T> = Result<T, String>;

pub trait Node: Send {
    fn process(&mut self, ctx: &mut Ctx<'_>, inputs: Vec<Value>) -> NodeResult<Option<Value>>;

    /// Called once after the last input; may emit a final value.
    fn finish(&mut self, _ctx: &mut Ctx<'_>) -> NodeResult<Option<Value>> {
        Ok(None)
    }

    fn set_param(&mut self, name: &str, _value: &Json) -> NodeResult<()> {
        Err(format!("param '{name}' cannot be changed at run time"))
    }

    fn report(&self) -> Option<Json> {
        None
    }

    fn take_output(&mut self) -> Option<SinkOutput> {
        None
    }
}

/// What a node needs to know when it is built.
pub struct BuildCtx<'a> {
    pub id: &'a str,
    pub mode: Mode,
    /// Resolved type of the `in` port, if the node has one.
    pub input: Option<PortType>,
    pub seed: u64,
}

/// Typed access to a node's parameters with catalog defaults.
pub struct Params<'a> {
    spec: &'a NodeSpec,
    map: &'a BTreeMap<String, Json>,
}

impl<'a> Params<'a> {
    pub fn new(spec: &'a NodeSpec, map: &'a BTreeMap<String, Json>) -> Self {
        Self { spec, map }
    }

    pub fn get(&self, name: &str) -> Option<&Json> {
        self.map.get(name).or_else(|| self.spec.param(name).and_then(|p| p.default.as_ref()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn parse<T: DeserializeOwned>(&self, name: &str) -> NodeResult<Option<T>> {
        self.get(name)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| format!("param '{name}': {e}")))
            .transpose()
    }

    pub fn need<T: DeserializeOwned>(&self, name: &str) -> NodeResult<T> {
        self.parse(name)?.ok_or_else(|| format!("missing param '{name}'"))
    }
}

/// Per-node seed: the document seed mixed with the node id.
pub fn node_seed(doc_seed: u64, id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let mut state = doc_seed ^ u64::from_le_bytes(bytes);
    noetic_core::rng::splitmix64(&mut state)
}

pub(crate) fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Node kinds that cannot run on a live stream.
pub fn offline_only_reason(kind: &str, params: &Params<'_>) -> Option<&'static str> {
    match kind {
        "select.channels" if params.has("method") => Some("ranked channel selection needs the whole labeled set"),
        "feature.csp" if !params.has("filters") => Some("CSP filters must be supplied to run online"),
        "train.classifier" => Some("training needs the whole labeled set"),
        _ => None,
    }
}

pub fn build_node(spec: &NodeSpec, params: &Params<'_>, ctx: &BuildCtx<'_>) -> NodeResult<Box<dyn Node>> {
    if ctx.mode == Mode::Online {
        if let Some(reason) = offline_only_reason(spec.kind, params) {
            return Err(format!("{} is offline-only here: {reason}", spec.kind));
        }
    }
    Ok(match spec.kind {
        "source.replay" | "source.stream" | "source.synth" => Box::new(source::Passthrough),
        "epoch.markers" => Box::new(epoch::MarkerEpocher::build(params)?),
        "epoch.sliding" => Box::new(epoch::SlidingEpocher::build(params)?),
        "select.channels" => Box::new(preprocess::SelectChannels::build(params, ctx)?),
        "filt.butter" => Box::new(preprocess::Butter::build(params, ctx)?),
        "ref.car" => Box::new(preprocess::Car),
        "window.kaiser" => Box::new(preprocess::Kaiser::build(params)?),
        "artifact.amplitude" => Box::new(preprocess::Amplitude::build(params)?),
        "artifact.regression" => Box::new(preprocess::Regression::build(params)?),
        "artifact.ica" => Box::new(preprocess::Ica::build(params, ctx)?),
        "feature.csp" => Box::new(feature::CspNode::build(params)?),
        "feature.concat" => Box::new(feature::Concat),
        "feature.welch" => Box::new(feature::Welch),
        k if k.starts_with("feature.") => Box::new(feature::Extract::build(k, params)?),
        "train.classifier" => Box::new(classify::Train::build(params, ctx)?),
        "classify.nb" | "classify.rmdm" | "classify.tangent_linear" => Box::new(classify::Classify::build(spec.kind, params)?),
        "sim.arena" => Box::new(classify::Arena::build(params, ctx)?),
        "sink.plot" => Box::new(sink::Plot::build(params, ctx)?),
        "sink.file" => Box::new(sink::File::build(params)?),
        "sink.decision" => Box::new(sink::Decisions::default()),
        other => return Err(format!("no runtime for kind '{other}'")),
    })
}
