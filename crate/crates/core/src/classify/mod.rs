pub mod eval;
pub mod model;
pub mod riemann;

pub use eval::{confusion_metrics, cross_validate, itr_bits_per_selection, stratified_folds, Confusion, CvReport, FoldResult};
pub use model::{train, ClassifierKind, ClassifierModel, Hyperparams, Prediction, Sample, TrainData};
pub use riemann::{airm_distance, epoch_covariance, riemann_mean, tangent_vector, SpdMatrix};
