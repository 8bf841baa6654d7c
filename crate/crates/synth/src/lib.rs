//! Deterministic synthetic cohort generator with ground truth.
//!
//! Produces the seven PCORnet-style CSV tables plus a fee-schedule fixture
//! from a seeded configuration, planting outcome events consistent with a
//! known logistic risk model. Alongside the tables it writes a ground-truth
//! file carrying the true label of every encounter (re-derived by an
//! independent straight-line oracle, not the production phenotyper), the
//! per-encounter event probabilities, the Bayes-optimal AUROC of the planted
//! model, expected feature vectors, and exact counts of every injected data
//! defect — which is what makes end-to-end pipeline accuracy checkable.

pub mod config;
pub mod expected;
pub mod generate;
pub mod ground_truth;
pub mod menu;
pub mod oracle;

pub use config::{ArmRates, Injections, LogitCoeffs, Outcome, PrevalenceTargets, SynthConfig};
pub use generate::generate;
pub use ground_truth::{EncounterTruth, GroundTruth};

/// Errors from configuration validation, calibration, or file output.
#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("synth config: {0}")]
    Config(String),

    /// Intercept bisection could not reach the prevalence target — the
    /// planted coefficients push every score to one side.
    #[error("calibration for {outcome} cannot reach prevalence {target}")]
    Calibration { outcome: &'static str, target: f64 },

    /// A generated encounter's independently re-derived label disagreed with
    /// the label that was planted; this is a generator bug, surfaced rather
    /// than silently shipped.
    #[error("generator invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}
