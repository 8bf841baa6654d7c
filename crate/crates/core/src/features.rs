//! Feature engineering: the fixed 99-entry feature specification, lab
//! plausibility cleaning, windowed lab summary statistics, BMI, medication
//! exposure flags, and assembly of one raw feature vector per encounter.
//!
//! Windows relative to the surgery date `s` (date granularity):
//!   * preoperative labs: [s−7, s−1]
//!   * historical labs:   [s−365, s−8]
//! A lab drawn on the surgery date itself belongs to neither window.
//! Medication exposure looks at dispenses in [admit−365, admit−1] and
//! vitals for BMI at measurements timestamped within the year up to and
//! including the admission instant.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use serde::{Deserialize, Serialize};

use crate::comorbidity::{comorbidity_profile, ComorbidityMaps};
use crate::error::CoreError;
use crate::phenotype::{ckd_epi_2021_egfr, creatinine_series, estimate_baseline_scr, KdigoConfig};
use crate::types::*;

// ---------------------------------------------------------------------------
// Feature specification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Binary,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub source: String,
    pub window: String,
}

/// The ordered feature list. The canonical specification has exactly 99
/// entries; `with_doctor_id` appends the optional surgeon identifier used by
/// the sensitivity analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpecList {
    specs: Vec<FeatureSpec>,
}

pub const CANONICAL_FEATURE_COUNT: usize = 99;

impl FeatureSpecList {
    pub fn from_csv_str(s: &str) -> Result<Self, CoreError> {
        let mut reader = csv::Reader::from_reader(s.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| CoreError::Config(format!("feature spec: {e}")))?
            .clone();
        for col in ["name", "kind", "source", "window"] {
            if !headers.iter().any(|h| h == col) {
                return Err(CoreError::Config(format!("feature spec: missing column {col}")));
            }
        }
        #[derive(Deserialize)]
        struct Row {
            name: String,
            kind: String,
            source: String,
            window: String,
        }
        let mut specs = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, record) in reader.deserialize::<Row>().enumerate() {
            let row =
                record.map_err(|e| CoreError::Config(format!("feature spec line {}: {e}", i + 2)))?;
            let kind = match row.kind.as_str() {
                "numeric" => FeatureKind::Numeric,
                "binary" => FeatureKind::Binary,
                "categorical" => FeatureKind::Categorical,
                other => {
                    return Err(CoreError::Config(format!(
                        "feature spec line {}: unknown kind '{other}'",
                        i + 2
                    )))
                }
            };
            if !seen.insert(row.name.clone()) {
                return Err(CoreError::Config(format!(
                    "feature spec: duplicate feature '{}'",
                    row.name
                )));
            }
            specs.push(FeatureSpec { name: row.name, kind, source: row.source, window: row.window });
        }
        if specs.len() != CANONICAL_FEATURE_COUNT {
            return Err(CoreError::Config(format!(
                "feature spec must list exactly {CANONICAL_FEATURE_COUNT} features, got {}",
                specs.len()
            )));
        }
        Ok(FeatureSpecList { specs })
    }

    /// Append the surgeon identifier as an extra categorical feature.
    pub fn with_doctor_id(mut self) -> Self {
        self.specs.push(FeatureSpec {
            name: "doctor_id".into(),
            kind: FeatureKind::Categorical,
            source: "operative".into(),
            window: String::new(),
        });
        self
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.specs.iter()
    }

    pub fn names(&self) -> Vec<&str> {
        self.specs.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

// ---------------------------------------------------------------------------
// Feature values and vectors
// ---------------------------------------------------------------------------

/// One raw feature value. `Numeric` never holds a non-finite number; absent
/// information is always `Missing` (serialized as JSON null).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl FeatureValue {
    pub fn binary(b: bool) -> Self {
        FeatureValue::Numeric(if b { 1.0 } else { 0.0 })
    }

    pub fn numeric_opt(v: Option<f64>) -> Self {
        match v {
            Some(x) if x.is_finite() => FeatureValue::Numeric(x),
            _ => FeatureValue::Missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub encounter_id: String,
    pub values: BTreeMap<String, FeatureValue>,
}

// ---------------------------------------------------------------------------
// Plausibility cleaning
// ---------------------------------------------------------------------------

/// Inclusive physiological plausibility bounds per analyte, loaded from CSV
/// (`analyte,low,high`). Every analyte must have a range.
#[derive(Debug, Clone)]
pub struct PlausibilityRanges {
    map: BTreeMap<Analyte, (f64, f64)>,
}

impl PlausibilityRanges {
    pub fn from_csv_str(s: &str) -> Result<Self, CoreError> {
        #[derive(Deserialize)]
        struct Row {
            analyte: String,
            low: f64,
            high: f64,
        }
        let mut reader = csv::Reader::from_reader(s.as_bytes());
        let mut map = BTreeMap::new();
        for (i, record) in reader.deserialize::<Row>().enumerate() {
            let row = record
                .map_err(|e| CoreError::Config(format!("plausibility ranges line {}: {e}", i + 2)))?;
            let analyte = Analyte::parse(&row.analyte).ok_or_else(|| {
                CoreError::Config(format!(
                    "plausibility ranges line {}: unknown analyte '{}'",
                    i + 2,
                    row.analyte
                ))
            })?;
            if !(row.low.is_finite() && row.high.is_finite() && row.low < row.high) {
                return Err(CoreError::Config(format!(
                    "plausibility ranges line {}: invalid range [{}, {}]",
                    i + 2,
                    row.low,
                    row.high
                )));
            }
            if map.insert(analyte, (row.low, row.high)).is_some() {
                return Err(CoreError::Config(format!(
                    "plausibility ranges: duplicate analyte '{}'",
                    row.analyte
                )));
            }
        }
        for analyte in Analyte::ALL {
            if !map.contains_key(&analyte) {
                return Err(CoreError::Config(format!(
                    "plausibility ranges: no range for analyte '{}'",
                    analyte.as_str()
                )));
            }
        }
        Ok(PlausibilityRanges { map })
    }

    pub fn bounds(&self, analyte: Analyte) -> (f64, f64) {
        self.map[&analyte]
    }

    pub fn contains(&self, analyte: Analyte, value: f64) -> bool {
        let (lo, hi) = self.map[&analyte];
        value >= lo && value <= hi
    }

    /// Drop implausible values; returns the retained rows and removal counts
    /// per analyte.
    pub fn clean_labs(&self, labs: &[LabRow]) -> (Vec<LabRow>, BTreeMap<Analyte, u64>) {
        let mut kept = Vec::with_capacity(labs.len());
        let mut removed: BTreeMap<Analyte, u64> = BTreeMap::new();
        for lab in labs {
            if self.contains(lab.analyte, lab.value) {
                kept.push(lab.clone());
            } else {
                *removed.entry(lab.analyte).or_insert(0) += 1;
            }
        }
        (kept, removed)
    }
}

// ---------------------------------------------------------------------------
// Lab statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabStats {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    /// Sample variance (n−1 denominator); absent below two values.
    pub variance: Option<f64>,
    pub count: usize,
}

pub fn lab_stats(values: &[f64]) -> LabStats {
    let count = values.len();
    if count == 0 {
        return LabStats { min: None, max: None, mean: None, variance: None, count: 0 };
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / count as f64;
    let variance = if count >= 2 {
        Some(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64)
    } else {
        None
    };
    LabStats { min: Some(min), max: Some(max), mean: Some(mean), variance, count }
}

impl LabStats {
    fn stat(&self, name: &str) -> Option<FeatureValue> {
        match name {
            "min" => Some(FeatureValue::numeric_opt(self.min)),
            "max" => Some(FeatureValue::numeric_opt(self.max)),
            "mean" => Some(FeatureValue::numeric_opt(self.mean)),
            "variance" => Some(FeatureValue::numeric_opt(self.variance)),
            "count" => Some(FeatureValue::Numeric(self.count as f64)),
            _ => None,
        }
    }
}

/// Inclusive preoperative lab window [s−7, s−1].
pub fn preop_window(surgery_date: NaiveDate) -> (NaiveDate, NaiveDate) {
    (surgery_date - Duration::days(7), surgery_date - Duration::days(1))
}

/// Inclusive historical lab window [s−365, s−8].
pub fn hist_window(surgery_date: NaiveDate) -> (NaiveDate, NaiveDate) {
    (surgery_date - Duration::days(365), surgery_date - Duration::days(8))
}

fn window_values(labs: &[LabRow], analyte: Analyte, lo: NaiveDate, hi: NaiveDate) -> Vec<f64> {
    labs.iter()
        .filter(|l| {
            l.analyte == analyte && {
                let d = l.taken_datetime.date();
                d >= lo && d <= hi
            }
        })
        .map(|l| l.value)
        .collect()
}

// ---------------------------------------------------------------------------
// BMI
// ---------------------------------------------------------------------------

fn latest_measurement(labs: &[LabRow], analyte: Analyte, admit: NaiveDateTime) -> Option<f64> {
    labs.iter()
        .filter(|l| {
            l.analyte == analyte
                && l.taken_datetime <= admit
                && l.taken_datetime >= admit - Duration::days(365)
        })
        .max_by(|a, b| {
            (a.taken_datetime, a.value)
                .partial_cmp(&(b.taken_datetime, b.value))
                .unwrap()
        })
        .map(|l| l.value)
}

/// BMI from the latest plausible height (cm) and weight (kg) in the year up
/// to admission; the two measurements are selected independently.
pub fn compute_bmi(cleaned_labs: &[LabRow], admit: NaiveDateTime) -> Option<f64> {
    let height_cm = latest_measurement(cleaned_labs, Analyte::Height, admit)?;
    let weight_kg = latest_measurement(cleaned_labs, Analyte::Weight, admit)?;
    let meters = height_cm / 100.0;
    Some(weight_kg / (meters * meters))
}

// ---------------------------------------------------------------------------
// Raw feature assembly
// ---------------------------------------------------------------------------

/// Everything `build_raw_features` needs beyond the bundle itself.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub spec: &'a FeatureSpecList,
    pub maps: &'a ComorbidityMaps,
    pub ranges: &'a PlausibilityRanges,
    pub kdigo: &'a KdigoConfig,
}

fn weekday_name(day: Weekday) -> &'static str {
    match day {
        Weekday::Mon => "Monday",
        Weekday::Tue => "Tuesday",
        Weekday::Wed => "Wednesday",
        Weekday::Thu => "Thursday",
        Weekday::Fri => "Friday",
        Weekday::Sat => "Saturday",
        Weekday::Sun => "Sunday",
    }
}

fn month_name(month: u32) -> &'static str {
    match month {
        1 => "January",
        2 => "February",
        3 => "March",
        4 => "April",
        5 => "May",
        6 => "June",
        7 => "July",
        8 => "August",
        9 => "September",
        10 => "October",
        11 => "November",
        _ => "December",
    }
}

/// Split a lab feature name like `urea_nitrogen_preop_min` into its analyte,
/// window tag, and statistic.
fn parse_lab_feature(name: &str) -> Option<(Analyte, &'static str, &str)> {
    for tag in ["_preop_", "_hist_"] {
        if let Some(pos) = name.find(tag) {
            let analyte = Analyte::parse(&name[..pos])?;
            let stat = &name[pos + tag.len()..];
            let window = if tag == "_preop_" { "preop" } else { "hist" };
            return Some((analyte, window, stat));
        }
    }
    None
}

pub fn build_raw_features(bundle: &EncounterBundle, ctx: &FeatureContext) -> FeatureVector {
    let demo = &bundle.demographics;
    let enc = &bundle.encounter;
    let surgery = bundle.surgery_date();
    let admit_dt = enc.admit_datetime;
    let admit_date = admit_dt.date();

    let (cleaned, _removed) = ctx.ranges.clean_labs(&bundle.labs);
    let profile = comorbidity_profile(ctx.maps, &bundle.dx_history, admit_date);
    let bmi = compute_bmi(&cleaned, admit_dt);
    let (preop_lo, preop_hi) = preop_window(surgery);
    let (hist_lo, hist_hi) = hist_window(surgery);

    // Reference kidney function: forward CKD-EPI at the estimated baseline
    // creatinine. Needs a known sex both for the equation and for the
    // imputation fallback.
    let reference_egfr = match demo.sex {
        Sex::Unknown => None,
        sex => {
            let series = creatinine_series(bundle, ctx.ranges);
            estimate_baseline_scr(&series, surgery, sex, demo.birth_date, ctx.kdigo).map(|scr| {
                ckd_epi_2021_egfr(scr, age_at(demo.birth_date, surgery) as f64, sex == Sex::Female)
            })
        }
    };

    let med_window_lo = admit_date - Duration::days(365);
    let med_window_hi = admit_date - Duration::days(1);
    let med_exposed = |class: MedClass| {
        bundle.meds.iter().any(|m| {
            m.med_class == class && m.dispense_date >= med_window_lo && m.dispense_date <= med_window_hi
        })
    };

    let mut values = BTreeMap::new();
    for spec in ctx.spec.iter() {
        let name = spec.name.as_str();
        let value = match name {
            "age" => FeatureValue::Numeric(age_at(demo.birth_date, surgery) as f64),
            "sex_female" => match demo.sex {
                Sex::Female => FeatureValue::Numeric(1.0),
                Sex::Male => FeatureValue::Numeric(0.0),
                Sex::Unknown => FeatureValue::Missing,
            },
            "race" => match demo.race {
                Race::Missing => FeatureValue::Missing,
                r => FeatureValue::Categorical(r.as_str().to_string()),
            },
            "ethnicity" => match demo.ethnicity {
                Ethnicity::Missing => FeatureValue::Missing,
                e => FeatureValue::Categorical(e.as_str().to_string()),
            },
            "language_english" => match demo.primary_language {
                Language::English => FeatureValue::Numeric(1.0),
                Language::Other => FeatureValue::Numeric(0.0),
                Language::Missing => FeatureValue::Missing,
            },
            "bmi" => FeatureValue::numeric_opt(bmi),
            "insurance" => match enc.payer {
                Payer::Missing => FeatureValue::Missing,
                p => FeatureValue::Categorical(p.as_str().to_string()),
            },
            "charlson_index" => FeatureValue::Categorical(profile.charlson_bucket.clone()),
            "ckd_status" => FeatureValue::Categorical(profile.ckd_status.as_str().to_string()),
            "reference_egfr" => FeatureValue::numeric_opt(reference_egfr),
            "admission_source_transfer" => match enc.admission_source {
                AdmissionSource::Transfer => FeatureValue::Numeric(1.0),
                AdmissionSource::NonTransfer => FeatureValue::Numeric(0.0),
                AdmissionSource::Missing => FeatureValue::Missing,
            },
            "admission_day" => {
                FeatureValue::Categorical(weekday_name(admit_date.weekday()).to_string())
            }
            "admission_month" => FeatureValue::Categorical(month_name(admit_date.month()).to_string()),
            "night_admission" => FeatureValue::binary(enc.admit_at_night),
            "primary_cpt" => FeatureValue::Categorical(bundle.index_surgery.cpt.clone()),
            "specialty" => match &bundle.index_surgery.provider_specialty {
                Some(s) => FeatureValue::Categorical(s.clone()),
                None => FeatureValue::Missing,
            },
            "doctor_id" => match &bundle.index_surgery.provider_id {
                Some(id) => FeatureValue::Categorical(id.clone()),
                None => FeatureValue::Missing,
            },
            _ if name.starts_with("cmb_") => match profile.flags.get(name) {
                Some(&flag) => FeatureValue::binary(flag),
                None => FeatureValue::Missing,
            },
            _ if name.starts_with("med_") => match MedClass::parse(&name[4..]) {
                Some(class) => FeatureValue::binary(med_exposed(class)),
                None => FeatureValue::Missing,
            },
            _ => match parse_lab_feature(name) {
                Some((analyte, window, stat)) => {
                    let (lo, hi) = if window == "preop" {
                        (preop_lo, preop_hi)
                    } else {
                        (hist_lo, hist_hi)
                    };
                    let stats = lab_stats(&window_values(&cleaned, analyte, lo, hi));
                    stats.stat(stat).unwrap_or(FeatureValue::Missing)
                }
                None => FeatureValue::Missing,
            },
        };
        values.insert(spec.name.clone(), value);
    }
    FeatureVector { encounter_id: bundle.encounter_id().to_string(), values }
}

/// Featurize every bundle (data-parallel when the `parallel` feature is on).
pub fn featurize_cohort(bundles: &[EncounterBundle], ctx: &FeatureContext) -> Vec<FeatureVector> {
    periop_par::map_slice(bundles, |b| build_raw_features(b, ctx))
}
