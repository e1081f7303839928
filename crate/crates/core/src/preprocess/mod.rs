//! Filtering, re-referencing, windowing and artifact handling.

pub mod filter;
pub mod ica;
pub mod regression;
pub mod spatial;

pub use filter::{apply_filter, design_butterworth, filtfilt, DesignSpec, FilterKind, FilterSpec, StreamingFilter};
pub use ica::{ica_clean, ica_fit, IcaModel, RejectRule};
pub use regression::{fit_regression_cleaner, regression_clean, RegressionCleaner};
pub use spatial::{common_average_reference, kaiser_window, reject_epochs_amplitude, RejectionReport};
