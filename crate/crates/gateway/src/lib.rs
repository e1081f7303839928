//! CLI and HTTP/WebSocket service for the noetic pipeline engine.

pub mod api;
pub mod cli;
pub mod session;
pub mod store;
