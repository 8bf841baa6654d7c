//! Gradient-boosted trees for the perioperative risk pipeline.
//!
//! Hand-rolled second-order boosting (logistic loss, exact greedy splits,
//! native missing-value routing), path-dependent TreeSHAP attributions and
//! stratified cross-validated grid search. Everything is deterministic
//! under a fixed seed, independent of thread count.

mod cv;
mod error;
mod importance;
mod matrix;
mod model;
mod params;
mod shap;
mod train;
mod tree;

pub use cv::{grid_search_cv, stratified_folds, CvPointSummary, CvReport, CV_SELECTION_NOTE};
pub use error::GbdtError;
pub use importance::{mean_abs_shap, ImportanceEntry, ImportanceReport};
pub use matrix::FeatureMatrix;
pub use model::{sigmoid, BoostedEnsemble};
pub use params::{GridSpec, TrainParams};
pub use shap::{brute_force_shap, shap_values, Attribution};
pub use train::{newton_leaf_weight, train, train_with_history};
pub use tree::{Node, Tree};
