//! Typed dataflow engine for EEG pipelines.
//!
//! A pipeline is a JSON document of nodes and edges. It is validated into a
//! [`FlowGraph`], then run either offline over whole recordings
//! ([`run_offline`]) or online one wire frame at a time ([`start_online`],
//! [`spawn_online`]). Both paths execute the same node code and produce the
//! same epoch-level decisions.

pub mod catalog;
pub mod doc;
pub mod engine;
pub mod error;
pub mod graph;
pub mod handle;
pub mod nodes;
pub mod schema;
pub mod value;

pub use catalog::{catalog, lookup, NodeSpec, PortType};
pub use doc::{content_hash, parse_pipeline, save_pipeline, PipelineDoc};
pub use engine::{
    run_frames, run_offline, source_frames, source_recording, start_online, Latency, OfflineResult, OnlineSession,
    ParamAck, Runtime, StopResult, Summary,
};
pub use error::{FlowError, FlowResult};
pub use graph::{validate_graph, FlowGraph};
pub use handle::{spawn_online, EngineHandle, PlotBus, Subscription};
pub use nodes::{Emitted, Mode, SinkOutput};
pub use value::{Decision, Event, PlotFrame, PlotKind, PlotPayload, Value};

/// Parses and validates pipeline text in one step.
pub fn load_graph(text: &str, source_path: &str) -> FlowResult<FlowGraph> {
    validate_graph(&parse_pipeline(text, source_path)?, source_path)
}
