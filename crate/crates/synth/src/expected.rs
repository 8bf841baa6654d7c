//! Expected feature values, computed straight from the generator's draft
//! quantities rather than via the production feature builder. Summary
//! statistics are accumulated in CSV emission order so that sums match the
//! production pass bit for bit; categorical derivations (Charlson score,
//! CKD stage, calendar names) are small local re-implementations.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use periop_core::features::FeatureValue;
use periop_core::types::{AdmissionSource, MedClass, Payer, Sex};

use crate::oracle::scr_at_egfr_bisect;

/// Everything the expected-feature computation needs about one encounter.
pub struct FeatureInputs<'a> {
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub race: Option<&'a str>,
    pub ethnicity: Option<&'a str>,
    pub language_english: Option<bool>,
    pub payer: Payer,
    pub admission_source: AdmissionSource,
    pub admit: NaiveDateTime,
    pub surgery_date: NaiveDate,
    pub cpt: &'a str,
    pub specialty: &'a str,
    pub provider_id: &'a str,
    pub include_doctor_id: bool,
    /// Conditions matched from the patient's diagnosis history
    /// (menu-declared closure, not the production matcher).
    pub conditions: &'a BTreeSet<&'static str>,
    pub ckd_stages: &'a [&'static str],
    /// Latest height (cm) / weight (kg) in the lookback year, if emitted.
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    /// Historical-window hemoglobin values in emission order.
    pub hist_hemoglobin: &'a [f64],
    /// Preoperative panel values per analyte, in emission order.
    pub preop_panel: &'a BTreeMap<&'static str, Vec<f64>>,
    /// Med classes dispensed in the year before admission.
    pub meds_in_window: &'a BTreeSet<MedClass>,
    /// Estimated baseline creatinine exactly as the production fallback
    /// chain would produce it (the generator mirrors that arithmetic).
    pub baseline_scr: Option<f64>,
}

fn num(v: f64) -> FeatureValue {
    FeatureValue::Numeric(v)
}
fn cat(s: &str) -> FeatureValue {
    FeatureValue::Categorical(s.to_string())
}
fn flag(b: bool) -> FeatureValue {
    FeatureValue::Numeric(if b { 1.0 } else { 0.0 })
}

fn age_years(birth: NaiveDate, as_of: NaiveDate) -> i32 {
    let mut years = as_of.year() - birth.year();
    let (bm, bd) = if birth.month() == 2 && birth.day() == 29 { (3, 1) } else { (birth.month(), birth.day()) };
    if (as_of.month(), as_of.day()) < (bm, bd) {
        years -= 1;
    }
    years
}

const WEEKDAYS: [&str; 7] =
    ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];
const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];

/// Charlson score with the original weights, applying both hierarchy rules.
fn local_charlson(conditions: &BTreeSet<&'static str>) -> u32 {
    let has = |c: &str| conditions.contains(c);
    let mut score = 0u32;
    for one in [
        "mi", "chf", "pvd", "cvd", "dementia", "chronic_pulmonary", "rheumatic", "pud",
    ] {
        if has(one) {
            score += 1;
        }
    }
    if has("liver_severe") {
        score += 3;
    } else if has("liver_mild") {
        score += 1;
    }
    if has("diabetes_complicated") {
        score += 2;
    } else if has("diabetes_uncomplicated") {
        score += 1;
    }
    for two in ["hemiplegia", "renal"] {
        if has(two) {
            score += 2;
        }
    }
    if has("metastatic") {
        score += 6;
    } else if has("malignancy") {
        score += 2;
    }
    if has("aids") {
        score += 6;
    }
    score
}

fn charlson_bucket(score: u32) -> &'static str {
    match score {
        0 => "0",
        1..=2 => "1-2",
        3..=4 => "3-4",
        _ => ">=5",
    }
}

fn local_ckd_status(stages: &[&'static str]) -> &'static str {
    let has = |s: &str| stages.contains(&s);
    if has("ckd_stage_5") {
        "stage_5_esrd"
    } else if has("ckd_stage_4") {
        "stage_4"
    } else if has("ckd_stage_3") {
        "stage_3"
    } else if has("ckd_stage_1_2") {
        "stage_1_2"
    } else if has("ckd_unspecified") {
        "unspecified"
    } else {
        "none"
    }
}

/// The 18 comorbidity flag features, from the matched-condition set.
fn flag_features(conditions: &BTreeSet<&'static str>) -> Vec<(&'static str, bool)> {
    let has = |c: &str| conditions.contains(c);
    vec![
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
    ]
}

struct Stats {
    min: f64,
    max: f64,
    mean: f64,
    variance: Option<f64>,
    count: usize,
}

/// Min/max/mean/sample-variance accumulated in slice (= emission) order.
fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() >= 2 {
        Some(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
    } else {
        None
    };
    Some(Stats {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        variance,
        count: values.len(),
    })
}

/// Which summary statistics each preop analyte contributes, mirroring the
/// canonical 99-feature list.
const PREOP_STATS: [(&str, &[&str]); 16] = [
    ("hemoglobin", &["min", "max", "mean", "variance", "count"]),
    ("calcium", &["min", "max", "mean", "variance"]),
    ("anion_gap", &["mean"]),
    ("wbc", &["min", "max", "mean", "variance"]),
    ("hematocrit", &["min", "mean", "variance"]),
    ("rbc", &["max", "mean"]),
    ("mchc", &["max", "mean"]),
    ("glucose", &["min", "max", "mean", "count"]),
    ("co2", &["min", "max", "mean", "variance"]),
    ("urea_nitrogen", &["min", "max", "mean", "variance"]),
    ("sodium", &["max", "mean"]),
    ("potassium", &["mean"]),
    ("rdw", &["max", "mean", "variance"]),
    ("platelets", &["min", "max", "mean", "variance"]),
    ("creatinine", &["min", "max", "mean", "variance"]),
    ("chloride", &["max", "mean", "variance"]),
];

fn egfr_2021(scr: f64, age: f64, female: bool) -> f64 {
    let (kappa, alpha) = if female { (0.7, -0.241) } else { (0.9, -0.302) };
    let r = scr / kappa;
    let sex_mult = if female { 1.012 } else { 1.0 };
    142.0 * r.min(1.0).powf(alpha) * r.max(1.0).powf(-1.2) * 0.9938f64.powf(age) * sex_mult
}

/// Compute all 99 (or 100 with doctor id) expected feature values.
pub fn expected_features(inp: &FeatureInputs<'_>) -> BTreeMap<String, FeatureValue> {
    let mut out: BTreeMap<String, FeatureValue> = BTreeMap::new();
    let mut put = |name: &str, v: FeatureValue| {
        out.insert(name.to_string(), v);
    };

    // Age (and the eGFR it feeds) is anchored to the surgery date, matching
    // the production feature builder; the under-18 exclusion uses admit.
    let age = age_years(inp.birth_date, inp.surgery_date);
    put("age", num(age as f64));

    match (inp.height_cm, inp.weight_kg) {
        (Some(h), Some(w)) if h > 0.0 => {
            let m = h / 100.0;
            put("bmi", num(w / (m * m)));
        }
        _ => put("bmi", FeatureValue::Missing),
    }

    let female = match inp.sex {
        Sex::Female => Some(true),
        Sex::Male => Some(false),
        Sex::Unknown => None,
    };
    match (female, inp.baseline_scr) {
        (Some(f), Some(b)) => put("reference_egfr", num(egfr_2021(b, age as f64, f))),
        _ => put("reference_egfr", FeatureValue::Missing),
    }

    put("sex_female", match female {
        Some(f) => flag(f),
        None => FeatureValue::Missing,
    });
    put("language_english", match inp.language_english {
        Some(e) => flag(e),
        None => FeatureValue::Missing,
    });
    put("race", match inp.race {
        Some(r) => cat(r),
        None => FeatureValue::Missing,
    });
    put("ethnicity", match inp.ethnicity {
        Some(e) => cat(e),
        None => FeatureValue::Missing,
    });
    put("insurance", match inp.payer {
        Payer::Private => cat("private"),
        Payer::Medicare => cat("medicare"),
        Payer::Medicaid => cat("medicaid"),
        Payer::Uninsured => cat("uninsured"),
        Payer::Missing => FeatureValue::Missing,
    });
    put("admission_source_transfer", match inp.admission_source {
        AdmissionSource::Transfer => flag(true),
        AdmissionSource::NonTransfer => flag(false),
        AdmissionSource::Missing => FeatureValue::Missing,
    });

    let hour = inp.admit.hour();
    put("night_admission", flag(hour >= 19 || hour < 7));
    put("admission_day", cat(WEEKDAYS[inp.admit.date().weekday().num_days_from_monday() as usize]));
    put("admission_month", cat(MONTHS[inp.admit.date().month0() as usize]));
    put("primary_cpt", cat(inp.cpt));
    put("specialty", cat(inp.specialty));
    if inp.include_doctor_id {
        put("doctor_id", cat(inp.provider_id));
    }

    for (name, on) in flag_features(inp.conditions) {
        put(name, flag(on));
    }
    let score = local_charlson(inp.conditions);
    put("charlson_index", cat(charlson_bucket(score)));
    put("ckd_status", cat(local_ckd_status(inp.ckd_stages)));

    for class in MedClass::ALL {
        put(&format!("med_{}", class.as_str()), flag(inp.meds_in_window.contains(&class)));
    }

    // historical hemoglobin: min / max / mean / count. Counts are always
    // numeric (0.0 on an empty window); the other statistics go missing.
    match stats(inp.hist_hemoglobin) {
        Some(s) => {
            put("hemoglobin_hist_min", num(s.min));
            put("hemoglobin_hist_max", num(s.max));
            put("hemoglobin_hist_mean", num(s.mean));
            put("hemoglobin_hist_count", num(s.count as f64));
        }
        None => {
            for stat in ["min", "max", "mean"] {
                put(&format!("hemoglobin_hist_{stat}"), FeatureValue::Missing);
            }
            put("hemoglobin_hist_count", num(0.0));
        }
    }

    for (analyte, wanted) in PREOP_STATS.iter() {
        let values: &[f64] = inp.preop_panel.get(analyte).map(Vec::as_slice).unwrap_or(&[]);
        let s = stats(values);
        for stat in wanted.iter() {
            let name = format!("{analyte}_preop_{stat}");
            let v = match (&s, *stat) {
                (_, "count") => num(values.len() as f64),
                (Some(s), "min") => num(s.min),
                (Some(s), "max") => num(s.max),
                (Some(s), "mean") => num(s.mean),
                (Some(s), "variance") => match s.variance {
                    Some(v) => num(v),
                    None => FeatureValue::Missing,
                },
                _ => FeatureValue::Missing,
            };
            put(&name, v);
        }
    }

    out
}

/// Shared helper for the generator: the production baseline fallback chain,
/// re-expressed over the draft's own value lists (preop minimum, else
/// historical mean, else bisection-inverted eGFR at 75).
pub fn draft_baseline(
    preop_creat: &[f64],
    hist_creat: &[f64],
    sex: Sex,
    birth_date: NaiveDate,
    surgery: NaiveDate,
) -> Option<f64> {
    if !preop_creat.is_empty() {
        return Some(preop_creat.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if !hist_creat.is_empty() {
        return Some(hist_creat.iter().sum::<f64>() / hist_creat.len() as f64);
    }
    let female = match sex {
        Sex::Female => true,
        Sex::Male => false,
        Sex::Unknown => return None,
    };
    Some(scr_at_egfr_bisect(75.0, age_years(birth_date, surgery) as f64, female))
}
