//! Artifact I/O: every stage writes its outputs here and reads its inputs
//! back through the same helpers.
//!
//! Rules enforced for all artifacts:
//! - writes are atomic (temp file + rename), so an interrupted run never
//!   leaves a half-written artifact behind;
//! - every artifact embeds the configuration hash and seed (JSON artifacts in
//!   a `provenance` block, CSV artifacts in a leading `#` comment line);
//! - loading an artifact verifies that stamp against the current
//!   configuration and fails with a data error on any mismatch;
//! - a missing artifact names the stage that would have produced it.

use std::path::{Path, PathBuf};

use periop_eval::{Provenance, REPORT_SCHEMA_VERSION};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

// Artifact file names, all relative to `paths.output_dir`.
pub const COHORT_JSON: &str = "cohort.json";
pub const INGEST_REPORT_JSON: &str = "ingest_report.json";
pub const REJECTS_CSV: &str = "rejects.csv";
pub const LABELS_CSV: &str = "labels.csv";
pub const LABEL_REPORT_JSON: &str = "label_report.json";
pub const FEATURES_JSON: &str = "features.json";
pub const FEATURIZE_REPORT_JSON: &str = "featurize_report.json";
pub const SPLIT_JSON: &str = "split.json";
pub const TRAIN_REPORT_JSON: &str = "train_report.json";
pub const METRICS_REPORT_JSON: &str = "metrics_report.json";
pub const SUBGROUPS_REPORT_JSON: &str = "subgroups_report.json";
pub const VARIANT_METRICS_JSON: &str = "variant_metrics.json";
pub const COHORT_TABLE_CSV: &str = "cohort_table.csv";
pub const IMPORTANCE_REPORT_JSON: &str = "importance_report.json";
pub const SENSITIVITY_REPORT_JSON: &str = "sensitivity_report.json";
pub const SUMMARY_TXT: &str = "summary.txt";

pub fn encoder_file(outcome: &str, with_doctor_id: bool) -> String {
    if with_doctor_id {
        format!("encoder_{outcome}_docid.json")
    } else {
        format!("encoder_{outcome}.json")
    }
}

pub fn model_file(outcome: &str, with_doctor_id: bool) -> String {
    if with_doctor_id {
        format!("model_{outcome}_docid.json")
    } else {
        format!("model_{outcome}.json")
    }
}

pub fn cv_file(outcome: &str, with_doctor_id: bool) -> String {
    if with_doctor_id {
        format!("cv_{outcome}_docid.json")
    } else {
        format!("cv_{outcome}.json")
    }
}

pub fn shap_csv_file(outcome: &str) -> String {
    format!("shap_importance_{outcome}.csv")
}

pub fn shap_svg_file(outcome: &str) -> String {
    format!("shap_importance_{outcome}.svg")
}

/// Stamp for the current run, embedded into every artifact.
pub fn provenance(sha: &str, seed: u64, stage: &str) -> Provenance {
    Provenance {
        schema_version: REPORT_SCHEMA_VERSION,
        config_sha256: sha.to_string(),
        seed,
        created_by: stage.to_string(),
    }
}

/// Atomic write: the artifact appears fully written or not at all.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp: PathBuf = {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        path.with_file_name(name)
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn save_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Load a JSON artifact; a missing file names the stage to run first.
pub fn load_json<T: DeserializeOwned>(path: &Path, produced_by: &str) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Data(format!(
                "{} not found; run `{produced_by}` first",
                path.display()
            ))
        } else {
            CliError::Data(format!("cannot read {}: {e}", path.display()))
        }
    })?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Data(format!("cannot parse {}: {e}", path.display())))
}

/// Verify that an artifact was produced under the current configuration.
pub fn check_stamp(
    found: &Provenance,
    expected_sha: &str,
    expected_seed: u64,
    path: &Path,
) -> Result<(), CliError> {
    if found.config_sha256 != expected_sha || found.seed != expected_seed {
        return Err(CliError::Data(format!(
            "{} was produced under a different configuration \
             (artifact config {}… seed {}, current config {}… seed {}); \
             re-run the pipeline from `ingest`",
            path.display(),
            &found.config_sha256[..12.min(found.config_sha256.len())],
            found.seed,
            &expected_sha[..12],
            expected_seed,
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV stamp line
// ---------------------------------------------------------------------------

/// First line of every CSV artifact: `# config_sha256=<hex> seed=<n>`.
pub fn csv_stamp(sha: &str, seed: u64) -> String {
    format!("# config_sha256={sha} seed={seed}\n")
}

/// Split a CSV artifact into its stamp and body, verifying the stamp.
pub fn read_stamped_csv(
    path: &Path,
    expected_sha: &str,
    expected_seed: u64,
    produced_by: &str,
) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Data(format!(
                "{} not found; run `{produced_by}` first",
                path.display()
            ))
        } else {
            CliError::Data(format!("cannot read {}: {e}", path.display()))
        }
    })?;
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| CliError::Data(format!("{} is empty", path.display())))?;
    let expected = format!("# config_sha256={expected_sha} seed={expected_seed}");
    if first.trim_end() != expected {
        return Err(CliError::Data(format!(
            "{} was produced under a different configuration ({}); \
             re-run the pipeline from `ingest`",
            path.display(),
            first.trim_end(),
        )));
    }
    Ok(rest.to_string())
}

// ---------------------------------------------------------------------------
// Artifact payload types
// ---------------------------------------------------------------------------

use periop_core::types::EncounterBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionCounts {
    pub non_inpatient: u64,
    pub under_18: u64,
    pub no_major_surgery: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortRejectOut {
    pub encounter_id: String,
    pub reason: String,
}

/// The assembled cohort: one bundle per retained encounter plus the exclusion
/// bookkeeping. This is the hand-off from `ingest` to every later stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortArtifact {
    pub provenance: Provenance,
    pub exclusions: ExclusionCounts,
    pub unknown_cpt_rows: u64,
    pub rejects: Vec<CohortRejectOut>,
    pub bundles: Vec<EncounterBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestReport {
    pub provenance: Provenance,
    /// Data rows read per table, before any rejection.
    pub input_rows: std::collections::BTreeMap<String, u64>,
    pub retained_rows: std::collections::BTreeMap<String, u64>,
    pub rejected_rows: std::collections::BTreeMap<String, u64>,
    pub exclusions: ExclusionCounts,
    pub unknown_cpt_rows: u64,
    pub cohort_rejects: u64,
    pub cohort_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelReport {
    pub provenance: Provenance,
    pub n: usize,
    /// Encounters with a defined label, per outcome (AKI excludes ESRD and
    /// missing-creatinine encounters).
    pub labeled: std::collections::BTreeMap<String, usize>,
    pub positives: std::collections::BTreeMap<String, usize>,
    pub prevalence: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesArtifact {
    pub provenance: Provenance,
    pub feature_names: Vec<String>,
    pub vectors: Vec<periop_core::features::FeatureVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizeReport {
    pub provenance: Provenance,
    pub n_vectors: usize,
    pub n_features: usize,
    pub missing_counts: std::collections::BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitArtifact {
    pub provenance: Provenance,
    pub train_fraction: f64,
    pub split: periop_core::types::CohortSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderArtifact {
    pub provenance: Provenance,
    pub outcome: String,
    pub with_doctor_id: bool,
    pub model: periop_core::EncoderModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub provenance: Provenance,
    pub outcome: String,
    pub with_doctor_id: bool,
    pub model: periop_gbdt::BoostedEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvArtifact {
    pub provenance: Provenance,
    pub outcome: String,
    pub with_doctor_id: bool,
    pub report: periop_gbdt::CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeTrainSummary {
    pub n_train: usize,
    pub n_pos: usize,
    /// Training-split rows dropped because the outcome label is undefined.
    pub n_dropped_unlabeled: usize,
    pub params: periop_gbdt::TrainParams,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainReport {
    pub provenance: Provenance,
    pub mode: String,
    pub train_fraction: f64,
    pub split_instant: String,
    pub smoothing_alpha: f64,
    pub outcomes: std::collections::BTreeMap<String, OutcomeTrainSummary>,
}

/// Both model variants evaluated on the identical validation rows, for the
/// doctor-id sensitivity comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantPair {
    pub without_doctor_id: periop_eval::EvaluatedModel,
    pub with_doctor_id: periop_eval::EvaluatedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantMetricsArtifact {
    pub provenance: Provenance,
    pub threshold_policy: String,
    pub outcomes: std::collections::BTreeMap<String, VariantPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceArtifact {
    pub provenance: Provenance,
    pub with_doctor_id: bool,
    pub outcomes: std::collections::BTreeMap<String, periop_gbdt::ImportanceReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/a.txt");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"hello");
        assert!(!path.with_file_name("a.txt.tmp").exists());
    }

    #[test]
    fn stamped_csv_detects_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let body = format!("{}a,b\n1,2\n", csv_stamp("cafe", 5));
        write_atomic(&path, body.as_bytes()).unwrap();
        assert_eq!(read_stamped_csv(&path, "cafe", 5, "label").unwrap(), "a,b\n1,2\n");
        let err = read_stamped_csv(&path, "beef", 5, "label").unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("different configuration"));
    }

    #[test]
    fn missing_artifact_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err =
            load_json::<IngestReport>(&dir.path().join("missing.json"), "ingest").unwrap_err();
        assert!(err.to_string().contains("run `ingest` first"), "{err}");
    }
}
