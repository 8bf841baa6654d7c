//! Evaluation layer for the perioperative risk pipeline: threshold-free
//! discrimination metrics, Youden operating points, percentile bootstrap
//! intervals, subgroup stratification and the two cohort comparison tests.
//!
//! Every routine here is deterministic for a fixed seed; bootstrap resamples
//! draw from per-resample counter-based RNG streams so results do not depend
//! on thread count or evaluation order.

mod bootstrap;
mod error;
mod metrics;
mod report;
mod stat_tests;
mod subgroup;

pub use bootstrap::{bootstrap_ci, resample_rng};
pub use error::EvalError;
pub use metrics::{auprc, auroc, confusion_metrics, youden_threshold, ConfusionMetrics};
pub use report::{
    cohort_table_csv, CohortTableRow, MetricsReport, Provenance, SensitivityReport,
    SubgroupsReport, REPORT_SCHEMA_VERSION,
};
pub use stat_tests::{chi_square_test, mann_whitney_u};
pub use subgroup::{
    compare_models, metric_bundle, subgroup_eval, CiValue, EvaluatedModel, MetricBundle,
    OutcomeSubgroups, SensitivityRow, SubgroupResult, SubgroupRow, ThresholdChoice,
};
