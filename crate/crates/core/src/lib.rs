//! Signal types, DSP kernels, feature extraction, classifiers and the
//! obstacle-avoidance simulator for an EEG brain-computer-interface engine.
//!
//! Heavy per-epoch and per-fold work runs on rayon when the `parallel`
//! feature is enabled (the default); [`par::sequential`] forces the
//! single-threaded path at runtime.

pub mod classify;
pub mod error;
pub mod features;
pub mod io;
pub mod linalg;
pub mod par;
pub mod preprocess;
pub mod rng;
pub mod select;
pub mod signal;
pub mod sim;
pub mod stim;

pub use error::{Error, Result};
