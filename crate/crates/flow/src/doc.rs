//! Pipeline documents: parsing, schema checks and canonical text.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

use crate::catalog::{known_kinds, lookup};
use crate::error::{FlowError, FlowResult};

pub const DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub from: String,
    #[serde(default = "default_out")]
    pub from_port: String,
    pub to: String,
    #[serde(default = "default_in")]
    pub to_port: String,
}

fn default_out() -> String {
    crate::catalog::OUT.into()
}

fn default_in() -> String {
    crate::catalog::IN.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDoc {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
    /// Editor-only layout data; ignored by the engine and the content hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui: Option<Json>,
}

impl PipelineDoc {
    pub fn new(seed: u64) -> Self {
        Self { version: DOC_VERSION, seed, nodes: Vec::new(), edges: Vec::new(), ui: None }
    }

    pub fn node(&self, id: &str) -> Option<&NodeDoc> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut NodeDoc> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    /// Builder helper: appends a node.
    pub fn add(&mut self, id: &str, kind: &str, params: Json) -> &mut Self {
        let params = match params {
            Json::Object(m) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        self.nodes.push(NodeDoc { id: id.into(), kind: kind.into(), params });
        self
    }

    /// Builder helper: appends an `out -> in` edge.
    pub fn link(&mut self, from: &str, to: &str) -> &mut Self {
        self.link_port(from, to, crate::catalog::IN)
    }

    pub fn link_port(&mut self, from: &str, to: &str, to_port: &str) -> &mut Self {
        self.edges.push(EdgeDoc { from: from.into(), from_port: default_out(), to: to.into(), to_port: to_port.into() });
        self
    }
}

fn node_err(path: &str, node: &str, message: impl Into<String>) -> FlowError {
    FlowError::Node { source_path: path.into(), node: node.into(), message: message.into() }
}

/// Parses and schema-checks a pipeline document. `source_path` is quoted in
/// every error message.
pub fn parse_pipeline(text: &str, source_path: &str) -> FlowResult<PipelineDoc> {
    let doc: PipelineDoc = serde_json::from_str(text)
        .map_err(|e| FlowError::Parse { source_path: source_path.into(), message: format!("invalid pipeline JSON: {e}") })?;
    check_doc(&doc, source_path)?;
    Ok(doc)
}

/// Schema checks shared by parsing and programmatic construction.
pub fn check_doc(doc: &PipelineDoc, source_path: &str) -> FlowResult<()> {
    if doc.version != DOC_VERSION {
        return Err(FlowError::Parse {
            source_path: source_path.into(),
            message: format!("unsupported pipeline version {} (expected {DOC_VERSION})", doc.version),
        });
    }
    let mut seen = BTreeSet::new();
    for n in &doc.nodes {
        if n.id.is_empty() {
            return Err(FlowError::Parse { source_path: source_path.into(), message: "node with empty id".into() });
        }
        if !seen.insert(n.id.as_str()) {
            return Err(node_err(source_path, &n.id, "duplicate node id"));
        }
        let spec = lookup(&n.kind).ok_or_else(|| {
            node_err(source_path, &n.id, format!("unknown kind '{}'; known kinds: {}", n.kind, known_kinds().join(", ")))
        })?;
        for (name, value) in &n.params {
            let ps = spec.param(name).ok_or_else(|| {
                let known: Vec<_> = spec.params.iter().map(|p| p.name).collect();
                node_err(source_path, &n.id, format!("unknown param '{name}' for {} (known: {})", n.kind, known.join(", ")))
            })?;
            ps.ty.check(value).map_err(|e| node_err(source_path, &n.id, format!("param '{name}': {e}")))?;
        }
        for ps in spec.params.iter().filter(|p| p.required) {
            if !n.params.contains_key(ps.name) {
                return Err(node_err(source_path, &n.id, format!("missing required param '{}'", ps.name)));
            }
        }
    }
    for e in &doc.edges {
        for end in [&e.from, &e.to] {
            if !seen.contains(end.as_str()) {
                return Err(FlowError::Parse {
                    source_path: source_path.into(),
                    message: format!("edge {}.{} -> {}.{} references unknown node '{end}'", e.from, e.from_port, e.to, e.to_port),
                });
            }
        }
    }
    Ok(())
}

fn sort_keys(v: Json) -> Json {
    match v {
        Json::Object(m) => {
            let sorted: BTreeMap<String, Json> = m.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Json::Object(sorted.into_iter().collect::<Map<_, _>>())
        }
        Json::Array(a) => Json::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Canonical text: sorted keys, two-space indent, LF, shortest round-trip
/// floats, trailing newline.
pub fn save_pipeline(doc: &PipelineDoc) -> String {
    let value = sort_keys(serde_json::to_value(doc).expect("pipeline serializes"));
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

/// SHA-256 of the canonical text with the `ui` block removed.
pub fn content_hash(doc: &PipelineDoc) -> String {
    let mut bare = doc.clone();
    bare.ui = None;
    hex::encode(Sha256::digest(save_pipeline(&bare).as_bytes()))
}
