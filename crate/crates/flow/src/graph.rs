//! Graph validation: ports, types, acyclicity and execution order.

use std::collections::{BTreeMap, BTreeSet};

use crate::catalog::{lookup, NodeSpec, OutputRule, PortType, Role};
use crate::doc::{check_doc, PipelineDoc};
use crate::error::{FlowError, FlowResult};

#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub doc: PipelineDoc,
    pub source_path: String,
    pub specs: BTreeMap<String, NodeSpec>,
    /// Topological order, ties broken by node id.
    pub order: Vec<String>,
    /// Resolved type of every connected input port, keyed by `(node, port)`.
    pub input_types: BTreeMap<(String, String), PortType>,
    pub output_types: BTreeMap<String, PortType>,
    /// Upstream node feeding each `(node, port)`.
    pub upstream: BTreeMap<(String, String), String>,
    /// Downstream `(node, port)` targets of each node's output.
    pub downstream: BTreeMap<String, Vec<(String, String)>>,
}

impl FlowGraph {
    pub fn spec(&self, id: &str) -> &NodeSpec {
        &self.specs[id]
    }

    pub fn sources(&self) -> Vec<&str> {
        self.order.iter().filter(|id| self.specs[*id].role == Role::Source).map(String::as_str).collect()
    }

    pub fn sinks(&self) -> Vec<&str> {
        self.order.iter().filter(|id| self.specs[*id].role == Role::Sink).map(String::as_str).collect()
    }

    pub fn input_type(&self, id: &str, port: &str) -> Option<PortType> {
        self.input_types.get(&(id.to_string(), port.to_string())).copied()
    }

    /// Tunable parameter names per node.
    pub fn tunables(&self) -> BTreeMap<String, Vec<&'static str>> {
        self.specs
            .iter()
            .map(|(id, s)| (id.clone(), s.params.iter().filter(|p| p.tunable).map(|p| p.name).collect()))
            .filter(|(_, v): &(String, Vec<&str>)| !v.is_empty())
            .collect()
    }
}

fn node_err(path: &str, node: &str, message: impl Into<String>) -> FlowError {
    FlowError::Node { source_path: path.into(), node: node.into(), message: message.into() }
}

/// One cycle among `remaining` nodes (all of which lie on or behind a cycle).
fn find_cycle(remaining: &BTreeSet<String>, succ: &BTreeMap<String, Vec<String>>) -> Vec<String> {
    let start = remaining.iter().next().expect("non-empty").clone();
    let mut path = vec![start.clone()];
    let mut pos: BTreeMap<String, usize> = BTreeMap::from([(start, 0)]);
    loop {
        let cur = path.last().expect("non-empty");
        let next = succ
            .get(cur)
            .and_then(|v| v.iter().find(|n| remaining.contains(*n)))
            .expect("every remaining node has a remaining successor")
            .clone();
        if let Some(&i) = pos.get(&next) {
            let mut cycle = path[i..].to_vec();
            cycle.push(next);
            return cycle;
        }
        pos.insert(next.clone(), path.len());
        path.push(next);
    }
}

pub fn validate_graph(doc: &PipelineDoc, source_path: &str) -> FlowResult<FlowGraph> {
    check_doc(doc, source_path)?;
    let specs: BTreeMap<String, NodeSpec> =
        doc.nodes.iter().map(|n| (n.id.clone(), lookup(&n.kind).expect("checked kind"))).collect();

    let mut upstream = BTreeMap::new();
    let mut downstream: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut succ: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in &doc.edges {
        let from = &specs[&e.from];
        if from.output_port() != Some(e.from_port.as_str()) {
            return Err(node_err(source_path, &e.from, format!("{} has no output port '{}'", from.kind, e.from_port)));
        }
        let to = &specs[&e.to];
        if to.input(&e.to_port).is_none() {
            return Err(node_err(source_path, &e.to, format!("{} has no input port '{}'", to.kind, e.to_port)));
        }
        if upstream.insert((e.to.clone(), e.to_port.clone()), e.from.clone()).is_some() {
            return Err(node_err(source_path, &e.to, format!("input port '{}' is connected more than once", e.to_port)));
        }
        downstream.entry(e.from.clone()).or_default().push((e.to.clone(), e.to_port.clone()));
        succ.entry(e.from.clone()).or_default().push(e.to.clone());
    }
    for (id, spec) in &specs {
        for port in &spec.inputs {
            if !upstream.contains_key(&(id.clone(), port.name.to_string())) {
                return Err(node_err(source_path, id, format!("input port '{}' is not connected", port.name)));
            }
        }
    }

    let mut indegree: BTreeMap<&str, usize> = specs.keys().map(|k| (k.as_str(), 0)).collect();
    for e in &doc.edges {
        *indegree.get_mut(e.to.as_str()).expect("known") += 1;
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::with_capacity(specs.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for next in succ.get(id).into_iter().flatten() {
            let d = indegree.get_mut(next.as_str()).expect("known");
            *d -= 1;
            if *d == 0 {
                ready.insert(next.as_str());
            }
        }
    }
    if order.len() < specs.len() {
        let done: BTreeSet<&String> = order.iter().collect();
        let remaining: BTreeSet<String> = specs.keys().filter(|k| !done.contains(k)).cloned().collect();
        // Trim nodes that only sit downstream of a cycle so the walk stays on it.
        let mut core = remaining.clone();
        loop {
            let before = core.len();
            let keep: BTreeSet<String> = core
                .iter()
                .filter(|n| succ.get(*n).is_some_and(|v| v.iter().any(|m| core.contains(m))))
                .cloned()
                .collect();
            core = keep;
            if core.len() == before {
                break;
            }
        }
        return Err(FlowError::Cycle { source_path: source_path.into(), cycle: find_cycle(&core, &succ) });
    }

    let mut input_types = BTreeMap::new();
    let mut output_types = BTreeMap::new();
    for id in &order {
        let spec = &specs[id];
        for port in &spec.inputs {
            let key = (id.clone(), port.name.to_string());
            let from = &upstream[&key];
            let t = output_types[from];
            if !port.accepts.contains(&t) {
                let accepts: Vec<&str> = port.accepts.iter().map(|t| t.name()).collect();
                return Err(FlowError::PortType {
                    source_path: source_path.into(),
                    from_node: from.clone(),
                    from_port: crate::catalog::OUT.into(),
                    from_type: t.name().into(),
                    to_node: id.clone(),
                    to_port: port.name.into(),
                    to_types: accepts.join("|"),
                });
            }
            input_types.insert(key, t);
        }
        match spec.output {
            OutputRule::None => {}
            OutputRule::Fixed(t) => {
                output_types.insert(id.clone(), t);
            }
            OutputRule::SameAs(port) => {
                output_types.insert(id.clone(), input_types[&(id.clone(), port.to_string())]);
            }
        }
    }

    Ok(FlowGraph { doc: doc.clone(), source_path: source_path.into(), specs, order, input_types, output_types, upstream, downstream })
}
