//! The ground-truth artifact written next to the generated tables.

use std::collections::BTreeMap;
use std::path::Path;

use periop_core::features::FeatureValue;
use periop_core::types::OutcomeLabels;
use serde::{Deserialize, Serialize};

use crate::SynthError;

/// Truth record for one generated index encounter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterTruth {
    pub encounter_id: String,
    pub patient_id: String,
    /// Whether the cohort builder should retain this encounter.
    pub in_cohort: bool,
    /// For excluded encounters: "non_inpatient" | "under_18" |
    /// "no_major_surgery".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusion: Option<String>,
    /// ESRD on or before surgery (AKI must come back unlabeled).
    pub esrd: bool,
    /// True labels, present only for cohort members.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<OutcomeLabels>,
    /// Event probability under the planted model, keyed by outcome; the
    /// "aki" key is present only when the encounter is AKI-labelable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_prob: Option<BTreeMap<String, f64>>,
    /// Expected value of every engineered feature, for the sampled subset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_features: Option<BTreeMap<String, FeatureValue>>,
}

/// Exact expected tallies for the deliberate data defects and exclusions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    /// Lab rows that must be rejected at ingestion (unparseable value).
    pub malformed_lab_rows: u64,
    /// Lab values that must be removed by plausibility cleaning, per analyte.
    pub implausible_lab_values: BTreeMap<String, u64>,
    /// Index-candidate encounters excluded as non-inpatient (includes the
    /// outpatient history encounters every indexed patient carries).
    pub excluded_non_inpatient: u64,
    pub excluded_under_18: u64,
    pub excluded_no_major_surgery: u64,
    /// Encounters referencing a patient absent from DEMOGRAPHIC (cohort
    /// rejects, not exclusions).
    pub orphan_encounters: u64,
    /// CPT procedure rows on retained encounters with no fee-schedule entry.
    pub unknown_cpt_rows: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub seed: u64,
    /// SHA-256 of the canonical JSON serialization of the generator config.
    pub config_sha256: String,
    pub n_patients: usize,
    pub n_encounters: usize,
    pub cohort_size: usize,
    pub counts: ExpectedCounts,
    /// Positives / labeled, per outcome.
    pub realized_prevalence: BTreeMap<String, f64>,
    /// Labeled encounters per outcome (AKI excludes unlabeled ones).
    pub labeled: BTreeMap<String, usize>,
    /// Bayes-optimal AUROC of the planted model: exact rank statistic over
    /// the per-encounter event probabilities.
    pub bayes_auroc_exact: BTreeMap<String, f64>,
    /// The same quantity by Monte-Carlo pair sampling (the published
    /// estimator); close to, but not identical with, the exact value.
    pub bayes_auroc_mc: BTreeMap<String, f64>,
    pub encounters: Vec<EncounterTruth>,
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn truth_for(&self, encounter_id: &str) -> Option<&EncounterTruth> {
        self.encounters.iter().find(|e| e.encounter_id == encounter_id)
    }
}

/// Exact AUROC of a scored, labeled sample via the rank-sum identity,
/// with midranks for tied scores.
pub fn exact_auroc(pairs: &[(f64, bool)]) -> Option<f64> {
    let n_pos = pairs.iter().filter(|(_, y)| *y).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.partial_cmp(&pairs[b].0).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pairs[order[j]].0 == pairs[order[i]].0 {
            j += 1;
        }
        // ranks i+1 ..= j share the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if pairs[k].1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Some((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_auroc_matches_hand_cases() {
        // perfectly separated
        let pairs = [(0.1, false), (0.2, false), (0.8, true), (0.9, true)];
        assert_eq!(exact_auroc(&pairs), Some(1.0));
        // one inversion among 2×2 pairs → 3/4
        let pairs = [(0.1, false), (0.8, false), (0.5, true), (0.9, true)];
        assert_eq!(exact_auroc(&pairs), Some(0.75));
        // all scores tied → 0.5
        let pairs = [(0.5, false), (0.5, true), (0.5, false), (0.5, true)];
        assert_eq!(exact_auroc(&pairs), Some(0.5));
        // degenerate
        assert_eq!(exact_auroc(&[(0.5, true)]), None);
    }

    #[test]
    fn truth_round_trips_through_json() {
        let gt = GroundTruth {
            schema_version: 1,
            seed: 7,
            config_sha256: "ab".into(),
            n_patients: 2,
            n_encounters: 1,
            cohort_size: 1,
            counts: ExpectedCounts::default(),
            realized_prevalence: BTreeMap::new(),
            labeled: BTreeMap::new(),
            bayes_auroc_exact: BTreeMap::new(),
            bayes_auroc_mc: BTreeMap::new(),
            encounters: vec![EncounterTruth {
                encounter_id: "e000001".into(),
                patient_id: "p000001".into(),
                in_cohort: true,
                exclusion: None,
                esrd: false,
                labels: Some(OutcomeLabels {
                    icu_need: true,
                    mv_need: false,
                    aki: None,
                    mortality: false,
                }),
                event_prob: None,
                expected_features: None,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ground_truth.json");
        gt.save(&path).unwrap();
        let back = GroundTruth::load(&path).unwrap();
        assert_eq!(back.encounters, gt.encounters);
        assert_eq!(back.seed, 7);
        let t = back.truth_for("e000001").unwrap();
        assert_eq!(t.labels.as_ref().unwrap().aki, None);
    }
}
