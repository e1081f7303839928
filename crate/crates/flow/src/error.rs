use thiserror::Error;

/// Errors raised while parsing, validating or running a pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("{source_path}: {message}")]
    Parse { source_path: String, message: String },
    #[error("{source_path}: node '{node}': {message}")]
    Node { source_path: String, node: String, message: String },
    #[error("{source_path}: cycle detected: {}", cycle.join(" -> "))]
    Cycle { source_path: String, cycle: Vec<String> },
    #[error("{source_path}: port type mismatch: {from_node}.{from_port} ({from_type}) -> {to_node}.{to_port} (accepts {to_types})")]
    PortType {
        source_path: String,
        from_node: String,
        from_port: String,
        from_type: String,
        to_node: String,
        to_port: String,
        to_types: String,
    },
    #[error("node '{node}' failed: {message}")]
    Runtime { node: String, message: String },
    #[error("{0}")]
    Session(String),
}

impl FlowError {
    /// Node id the error is about, when there is one.
    pub fn node(&self) -> Option<&str> {
        match self {
            FlowError::Node { node, .. } | FlowError::Runtime { node, .. } => Some(node),
            FlowError::PortType { to_node, .. } => Some(to_node),
            _ => None,
        }
    }
}

pub type FlowResult<T> = std::result::Result<T, FlowError>;
