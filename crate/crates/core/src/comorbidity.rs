//! Comorbidity profiling from diagnosis history: 18 binary comorbidity
//! flags, a bucketed Charlson index (original weights over Quan's ICD-9/10
//! condition mappings), and an ordinal CKD status.
//!
//! Diagnosis codes match by *prefix* on dot-stripped, uppercased codes, and
//! only against map rows of the same code system. Only rows dated on or
//! before the admission date count.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::types::{CodeSystem, DiagnosisRow};

/// All condition names the map file may use, grouped by purpose.
const CHARLSON_CONDITIONS: [(&str, u32); 17] = [
    ("mi", 1),
    ("chf", 1),
    ("pvd", 1),
    ("cvd", 1),
    ("dementia", 1),
    ("chronic_pulmonary", 1),
    ("rheumatic", 1),
    ("pud", 1),
    ("liver_mild", 1),
    ("diabetes_uncomplicated", 1),
    ("diabetes_complicated", 2),
    ("hemiplegia", 2),
    ("renal", 2),
    ("malignancy", 2),
    ("liver_severe", 3),
    ("metastatic", 6),
    ("aids", 6),
];

const FLAG_CONDITIONS: [&str; 12] = [
    "valvular",
    "coagulopathy",
    "weight_loss",
    "alcohol_abuse",
    "drug_abuse",
    "fluid_electrolyte",
    "anemia_deficiency",
    "anemia_blood_loss",
    "hypertension_uncomplicated",
    "hypertension_complicated",
    "obesity",
    "depression",
];

const CKD_CONDITIONS: [&str; 5] =
    ["ckd_stage_1_2", "ckd_stage_3", "ckd_stage_4", "ckd_stage_5", "ckd_unspecified"];

/// Ordinal CKD status; higher stages dominate when multiple codes match.
/// `Unspecified` (a bare 585 / N18 code) ranks below every explicit stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CkdStatus {
    None,
    Unspecified,
    Stage1_2,
    Stage3,
    Stage4,
    Stage5Esrd,
}

impl CkdStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CkdStatus::None => "none",
            CkdStatus::Unspecified => "unspecified",
            CkdStatus::Stage1_2 => "stage_1_2",
            CkdStatus::Stage3 => "stage_3",
            CkdStatus::Stage4 => "stage_4",
            CkdStatus::Stage5Esrd => "stage_5_esrd",
        }
    }
}

/// Prefix map loaded from CSV (`condition,code_system,prefix`). Prefixes are
/// stored dot-stripped and uppercased.
#[derive(Debug, Clone)]
pub struct ComorbidityMaps {
    prefixes: BTreeMap<String, Vec<(CodeSystem, String)>>,
}

fn normalize_code(code: &str) -> String {
    code.chars().filter(|c| *c != '.').collect::<String>().to_ascii_uppercase()
}

impl ComorbidityMaps {
    pub fn from_csv_str(s: &str) -> Result<Self, CoreError> {
        let known: BTreeSet<&str> = CHARLSON_CONDITIONS
            .iter()
            .map(|(c, _)| *c)
            .chain(FLAG_CONDITIONS)
            .chain(CKD_CONDITIONS)
            .collect();
        let mut prefixes: BTreeMap<String, Vec<(CodeSystem, String)>> = BTreeMap::new();
        let mut reader = csv::Reader::from_reader(s.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| CoreError::Config(format!("comorbidity map: {e}")))?
            .clone();
        for col in ["condition", "code_system", "prefix"] {
            if !headers.iter().any(|h| h == col) {
                return Err(CoreError::Config(format!("comorbidity map: missing column {col}")));
            }
        }
        for (i, record) in reader.deserialize::<MapRow>().enumerate() {
            let row = record.map_err(|e| {
                CoreError::Config(format!("comorbidity map line {}: {e}", i + 2))
            })?;
            if !known.contains(row.condition.as_str()) {
                return Err(CoreError::Config(format!(
                    "comorbidity map line {}: unknown condition '{}'",
                    i + 2,
                    row.condition
                )));
            }
            let system = match row.code_system.as_str() {
                "ICD9" => CodeSystem::Icd9,
                "ICD10" => CodeSystem::Icd10,
                other => {
                    return Err(CoreError::Config(format!(
                        "comorbidity map line {}: code_system must be ICD9 or ICD10, got '{other}'",
                        i + 2
                    )))
                }
            };
            let prefix = normalize_code(&row.prefix);
            if prefix.is_empty() {
                return Err(CoreError::Config(format!(
                    "comorbidity map line {}: empty prefix",
                    i + 2
                )));
            }
            prefixes.entry(row.condition).or_default().push((system, prefix));
        }
        for cond in &known {
            if !prefixes.contains_key(*cond) {
                return Err(CoreError::Config(format!(
                    "comorbidity map: condition '{cond}' has no prefixes"
                )));
            }
        }
        Ok(ComorbidityMaps { prefixes })
    }

    pub fn conditions(&self) -> impl Iterator<Item = &str> {
        self.prefixes.keys().map(String::as_str)
    }

    fn row_matches(&self, condition: &str, system: CodeSystem, normalized: &str) -> bool {
        self.prefixes
            .get(condition)
            .map(|entries| {
                entries
                    .iter()
                    .any(|(sys, pre)| *sys == system && normalized.starts_with(pre.as_str()))
            })
            .unwrap_or(false)
    }
}

#[derive(Deserialize)]
struct MapRow {
    condition: String,
    code_system: String,
    prefix: String,
}

/// Conditions matched by any diagnosis dated on or before `admit_date`.
pub fn matched_conditions<'m>(
    maps: &'m ComorbidityMaps,
    dx_history: &[DiagnosisRow],
    admit_date: NaiveDate,
) -> BTreeSet<&'m str> {
    let mut hit: BTreeSet<&str> = BTreeSet::new();
    for row in dx_history {
        if row.event_date > admit_date {
            continue;
        }
        if !matches!(row.code_system, CodeSystem::Icd9 | CodeSystem::Icd10) {
            continue;
        }
        let normalized = normalize_code(&row.code);
        for condition in maps.prefixes.keys() {
            if hit.contains(condition.as_str()) {
                continue;
            }
            if maps.row_matches(condition, row.code_system, &normalized) {
                hit.insert(condition.as_str());
            }
        }
    }
    hit
}

/// The 18 binary comorbidity feature names, in feature-spec order.
pub const COMORBIDITY_FLAG_FEATURES: [&str; 18] = [
    "cmb_myocardial_infarction",
    "cmb_congestive_heart_failure",
    "cmb_cerebrovascular_disease",
    "cmb_chronic_pulmonary_disease",
    "cmb_peripheral_vascular_disease",
    "cmb_cancer",
    "cmb_liver_disease",
    "cmb_valvular_disease",
    "cmb_coagulopathy",
    "cmb_weight_loss",
    "cmb_alcohol_or_drug_abuse",
    "cmb_fluid_electrolyte_disorders",
    "cmb_chronic_anemia",
    "cmb_hypertension",
    "cmb_obesity",
    "cmb_diabetes",
    "cmb_metastatic_carcinoma",
    "cmb_depression",
];

/// Comorbidity summary for one encounter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComorbidityProfile {
    /// Keyed by the names in [`COMORBIDITY_FLAG_FEATURES`].
    pub flags: BTreeMap<String, bool>,
    pub charlson_score: u32,
    /// One of "0", "1-2", "3-4", ">=5".
    pub charlson_bucket: String,
    pub ckd_status: CkdStatus,
}

pub fn charlson_bucket(score: u32) -> &'static str {
    match score {
        0 => "0",
        1..=2 => "1-2",
        3..=4 => "3-4",
        _ => ">=5",
    }
}

/// Score the Charlson index with the original weights and the standard
/// hierarchy rules: severe liver disease supersedes mild, complicated
/// diabetes supersedes uncomplicated, metastatic disease supersedes
/// non-metastatic malignancy.
pub fn charlson_score(matched: &BTreeSet<&str>) -> u32 {
    let mut score = 0;
    for (condition, weight) in CHARLSON_CONDITIONS {
        if !matched.contains(condition) {
            continue;
        }
        let superseded = match condition {
            "liver_mild" => matched.contains("liver_severe"),
            "diabetes_uncomplicated" => matched.contains("diabetes_complicated"),
            "malignancy" => matched.contains("metastatic"),
            _ => false,
        };
        if !superseded {
            score += weight;
        }
    }
    score
}

pub fn ckd_status(matched: &BTreeSet<&str>) -> CkdStatus {
    let mut status = CkdStatus::None;
    for (condition, stage) in [
        ("ckd_unspecified", CkdStatus::Unspecified),
        ("ckd_stage_1_2", CkdStatus::Stage1_2),
        ("ckd_stage_3", CkdStatus::Stage3),
        ("ckd_stage_4", CkdStatus::Stage4),
        ("ckd_stage_5", CkdStatus::Stage5Esrd),
    ] {
        if matched.contains(condition) {
            status = status.max(stage);
        }
    }
    status
}

/// Full profile for one encounter's diagnosis history.
pub fn comorbidity_profile(
    maps: &ComorbidityMaps,
    dx_history: &[DiagnosisRow],
    admit_date: NaiveDate,
) -> ComorbidityProfile {
    let matched = matched_conditions(maps, dx_history, admit_date);
    let has = |c: &str| matched.contains(c);
    let mut flags = BTreeMap::new();
    let assignments: [(&str, bool); 18] = [
        ("cmb_myocardial_infarction", has("mi")),
        ("cmb_congestive_heart_failure", has("chf")),
        ("cmb_cerebrovascular_disease", has("cvd")),
        ("cmb_chronic_pulmonary_disease", has("chronic_pulmonary")),
        ("cmb_peripheral_vascular_disease", has("pvd")),
        ("cmb_cancer", has("malignancy") || has("metastatic")),
        ("cmb_liver_disease", has("liver_mild") || has("liver_severe")),
        ("cmb_valvular_disease", has("valvular")),
        ("cmb_coagulopathy", has("coagulopathy")),
        ("cmb_weight_loss", has("weight_loss")),
        ("cmb_alcohol_or_drug_abuse", has("alcohol_abuse") || has("drug_abuse")),
        ("cmb_fluid_electrolyte_disorders", has("fluid_electrolyte")),
        ("cmb_chronic_anemia", has("anemia_deficiency") || has("anemia_blood_loss")),
        ("cmb_hypertension", has("hypertension_uncomplicated") || has("hypertension_complicated")),
        ("cmb_obesity", has("obesity")),
        ("cmb_diabetes", has("diabetes_uncomplicated") || has("diabetes_complicated")),
        ("cmb_metastatic_carcinoma", has("metastatic")),
        ("cmb_depression", has("depression")),
    ];
    for (name, value) in assignments {
        flags.insert(name.to_string(), value);
    }
    let score = charlson_score(&matched);
    ComorbidityProfile {
        flags,
        charlson_score: score,
        charlson_bucket: charlson_bucket(score).to_string(),
        ckd_status: ckd_status(&matched),
    }
}
