//! Pipeline configuration: a single TOML file drives every stage, and a small
//! set of command-line flags can override the most commonly varied knobs.
//!
//! The SHA-256 of the fully resolved configuration (after flag overrides) is
//! stamped into every artifact; downstream stages refuse artifacts produced
//! under a different configuration so a half-updated output directory cannot
//! silently mix runs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use periop_gbdt::{GridSpec, TrainParams};
use periop_synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// The four outcome names in canonical order.
pub const ALL_OUTCOMES: [&str; 4] = ["icu", "mv", "aki", "mortality"];

/// Human-readable outcome titles for reports.
pub fn outcome_title(outcome: &str) -> &'static str {
    match outcome {
        "icu" => "ICU admission",
        "mv" => "Mechanical ventilation",
        "aki" => "Acute kidney injury (KDIGO)",
        "mortality" => "In-hospital mortality",
        _ => "Unknown outcome",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory holding the PCORnet-style CSV tables.
    pub data_dir: PathBuf,
    /// RVU fee schedule CSV; defaults to `<data_dir>/RVU.csv`.
    pub rvu_file: Option<PathBuf>,
    /// Directory where every artifact is written.
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_dir: PathBuf::from("data"),
            rvu_file: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PathsConfig {
    pub fn rvu_path(&self) -> PathBuf {
        self.rvu_file.clone().unwrap_or_else(|| self.data_dir.join("RVU.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    /// Fraction of encounters (chronologically earliest) used for training.
    pub train_fraction: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Train once with `[train.params]` as given.
    Fixed,
    /// 5-fold stratified grid search over `[train.grid]`, then refit the
    /// winner on the full training split.
    Grid,
}

/// Hyperparameters with per-field defaults so a TOML `[train.params]` table
/// may set only the knobs it cares about. The seed is always the pipeline
/// seed, never configured here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub n_estimators: usize,
    pub gamma: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub lambda: f64,
    pub eta: f64,
    pub base_score: Option<f64>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            n_estimators: 150,
            gamma: 0.0,
            max_depth: 4,
            subsample: 1.0,
            colsample_bytree: 1.0,
            lambda: 1.0,
            eta: 0.1,
            base_score: None,
        }
    }
}

impl ParamsConfig {
    pub fn to_train_params(&self, seed: u64) -> TrainParams {
        TrainParams {
            n_estimators: self.n_estimators,
            gamma: self.gamma,
            max_depth: self.max_depth,
            subsample: self.subsample,
            colsample_bytree: self.colsample_bytree,
            lambda: self.lambda,
            eta: self.eta,
            base_score: self.base_score,
            seed,
        }
    }
}

/// Grid axes with per-field defaults mirroring [`GridSpec::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_estimators: Vec<usize>,
    pub gamma: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        GridConfig {
            n_estimators: g.n_estimators,
            gamma: g.gamma,
            max_depth: g.max_depth,
            subsample: g.subsample,
            colsample_bytree: g.colsample_bytree,
        }
    }
}

impl GridConfig {
    pub fn to_grid_spec(&self) -> GridSpec {
        GridSpec {
            n_estimators: self.n_estimators.clone(),
            gamma: self.gamma.clone(),
            max_depth: self.max_depth.clone(),
            subsample: self.subsample.clone(),
            colsample_bytree: self.colsample_bytree.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Hyperparameters for `mode = "fixed"`, and the base (eta, lambda,
    /// base_score) for grid mode.
    pub params: ParamsConfig,
    /// Grid searched in `mode = "grid"`.
    pub grid: GridConfig,
    /// Folds for the grid search and the train-OOF threshold policy.
    pub cv_folds: usize,
    /// Additive smoothing for the log-odds target encoder.
    pub smoothing_alpha: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Fixed,
            params: ParamsConfig::default(),
            grid: GridConfig::default(),
            cv_folds: 5,
            smoothing_alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Youden's J re-optimized on the validation scores.
    Validation,
    /// Youden's J on out-of-fold training predictions, then applied to the
    /// validation set as a fixed threshold.
    TrainOof,
}

impl ThresholdPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdPolicy::Validation => "validation",
            ThresholdPolicy::TrainOof => "train_oof",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Percentile bootstrap resamples for every confidence interval.
    pub bootstrap_resamples: usize,
    pub threshold_policy: ThresholdPolicy,
    /// Re-optimize the operating threshold inside each subgroup instead of
    /// inheriting the overall one.
    pub per_subgroup_threshold: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            bootstrap_resamples: 1000,
            threshold_policy: ThresholdPolicy::Validation,
            per_subgroup_threshold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    /// Validation rows attributed per outcome (earliest first); 0 means all.
    pub shap_rows: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { shap_rows: 2000 }
    }
}

/// The resolved pipeline configuration. Every field has a default, so an
/// empty TOML file (or none at all) is a valid starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed: synthesis, training, bootstrap and SHAP row selection all
    /// derive from it.
    pub seed: u64,
    /// Outcomes to model, a non-empty subset of icu/mv/aki/mortality.
    pub outcomes: Vec<String>,
    /// Use the doctor-id model as the primary model in metrics, subgroups and
    /// explanations. Both variants are always trained; this selects which one
    /// the headline reports describe.
    pub include_doctor_id: bool,
    pub paths: PathsConfig,
    pub cohort: CohortConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
    pub explain: ExplainConfig,
    /// Optional synthetic-data section; required by `synth`, and used by
    /// `run-all` to generate the input tables when present. The section's
    /// `seed` is overridden by the pipeline seed.
    pub synth: Option<SynthConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 20240611,
            outcomes: ALL_OUTCOMES.iter().map(|s| s.to_string()).collect(),
            include_doctor_id: false,
            paths: PathsConfig::default(),
            cohort: CohortConfig::default(),
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
            explain: ExplainConfig::default(),
            synth: None,
        }
    }
}

/// Flag-level overrides applied on top of the TOML file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub outcomes: Option<Vec<String>>,
    pub include_doctor_id: bool,
    pub threshold_policy: Option<ThresholdPolicy>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", p.display())))
            }
        }
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(seed) = ov.seed {
            self.seed = seed;
        }
        if let Some(outcomes) = &ov.outcomes {
            self.outcomes = outcomes.clone();
        }
        if ov.include_doctor_id {
            self.include_doctor_id = true;
        }
        if let Some(policy) = ov.threshold_policy {
            self.evaluate.threshold_policy = policy;
        }
        if let Some(sc) = &mut self.synth {
            sc.seed = self.seed;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.outcomes.is_empty() {
            return Err(CliError::Config("outcomes must not be empty".into()));
        }
        let known: BTreeSet<&str> = ALL_OUTCOMES.into_iter().collect();
        let mut seen = BTreeSet::new();
        for o in &self.outcomes {
            if !known.contains(o.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown outcome '{o}' (expected one of: {})",
                    ALL_OUTCOMES.join(", ")
                )));
            }
            if !seen.insert(o.as_str()) {
                return Err(CliError::Config(format!("outcome '{o}' listed twice")));
            }
        }
        if !(self.cohort.train_fraction > 0.0 && self.cohort.train_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "cohort.train_fraction must be in (0, 1), got {}",
                self.cohort.train_fraction
            )));
        }
        if self.evaluate.bootstrap_resamples < 100 {
            return Err(CliError::Config(format!(
                "evaluate.bootstrap_resamples must be at least 100, got {}",
                self.evaluate.bootstrap_resamples
            )));
        }
        if self.train.cv_folds < 2 {
            return Err(CliError::Config(format!(
                "train.cv_folds must be at least 2, got {}",
                self.train.cv_folds
            )));
        }
        if !(self.train.smoothing_alpha > 0.0) {
            return Err(CliError::Config(format!(
                "train.smoothing_alpha must be positive, got {}",
                self.train.smoothing_alpha
            )));
        }
        self.resolved_params()
            .validate()
            .map_err(|e| CliError::Config(format!("train.params: {e}")))?;
        if let Some(sc) = &self.synth {
            sc.validate()?;
        }
        Ok(())
    }

    /// Training hyperparameters with the pipeline seed substituted in.
    pub fn resolved_params(&self) -> TrainParams {
        self.train.params.to_train_params(self.seed)
    }

    /// Hash of the fully resolved configuration; stamped into every artifact.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.sha256().len(), 64);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            seed = 7
            outcomes = ["icu", "aki"]
            [paths]
            data_dir = "d"
            [train]
            mode = "grid"
            cv_folds = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.outcomes, vec!["icu", "aki"]);
        assert_eq!(cfg.train.mode, TrainMode::Grid);
        assert_eq!(cfg.train.cv_folds, 3);
        assert_eq!(cfg.cohort.train_fraction, 0.8);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("sede = 7").unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn bad_outcome_is_a_config_error() {
        let mut cfg = PipelineConfig::default();
        cfg.outcomes = vec!["icu".into(), "picu".into()];
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("picu"));
    }

    #[test]
    fn overrides_change_the_hash() {
        let mut a = PipelineConfig::default();
        let before = a.sha256();
        a.apply(&Overrides { seed: Some(99), ..Overrides::default() });
        assert_ne!(before, a.sha256());
        assert_eq!(a.seed, 99);
    }

    #[test]
    fn synth_section_parses_partially() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            seed = 11
            [synth]
            n_patients = 300
            n_encounters = 250
            "#,
        )
        .unwrap();
        let sc = cfg.synth.as_ref().unwrap();
        assert_eq!(sc.n_patients, 300);
        assert_eq!(sc.n_encounters, 250);
    }

    #[test]
    fn pipeline_seed_flows_into_synth_section() {
        let mut cfg: PipelineConfig =
            toml::from_str("seed = 5\n[synth]\nn_patients = 300\nn_encounters = 250\n").unwrap();
        cfg.apply(&Overrides::default());
        assert_eq!(cfg.synth.as_ref().unwrap().seed, 5);
    }
}
