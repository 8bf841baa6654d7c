//! Outcome phenotyping over the window from surgery date (inclusive) to
//! discharge date: ICU admission, mechanical ventilation, KDIGO-creatinine
//! AKI, and in-hospital mortality.
//!
//! All windows operate at date granularity except the KDIGO 48-hour rule,
//! which uses full lab timestamps.

use std::collections::HashSet;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::cohort::has_esrd_at_surgery;
use crate::error::CoreError;
use crate::features::PlausibilityRanges;
use crate::types::*;

/// Code lists for the phenotypes, editable without recompilation. Matching is
/// exact on dot-stripped, uppercased codes, so "Z99.11" and "Z9911" are the
/// same code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhenotypeCodes {
    pub icu_procedures: Vec<String>,
    pub mv_diagnoses: Vec<String>,
    pub mv_procedures: Vec<String>,
    pub esrd_diagnoses: Vec<String>,
}

impl PhenotypeCodes {
    pub fn from_json_str(s: &str) -> Result<Self, CoreError> {
        Ok(serde_json::from_str(s)?)
    }
}

fn normalize_code(code: &str) -> String {
    code.chars().filter(|c| *c != '.').collect::<String>().to_ascii_uppercase()
}

/// Normalized lookup sets compiled once from a [`PhenotypeCodes`].
#[derive(Debug, Clone)]
pub struct CodeSets {
    icu_procedures: HashSet<String>,
    mv_diagnoses: HashSet<String>,
    mv_procedures: HashSet<String>,
}

impl CodeSets {
    pub fn compile(codes: &PhenotypeCodes) -> Self {
        let set = |v: &[String]| v.iter().map(|c| normalize_code(c)).collect();
        CodeSets {
            icu_procedures: set(&codes.icu_procedures),
            mv_diagnoses: set(&codes.mv_diagnoses),
            mv_procedures: set(&codes.mv_procedures),
        }
    }
}

/// The postoperative observation window, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeWindow {
    pub surgery_date: NaiveDate,
    pub discharge_date: NaiveDate,
}

impl OutcomeWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.surgery_date && date <= self.discharge_date
    }
}

/// KDIGO creatinine criteria configuration. Defaults follow the guideline:
/// ≥0.3 mg/dL rise within 48 hours, or ≥1.5× baseline within 7 days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdigoConfig {
    pub abs_increase_mg_dl: f64,
    pub rel_ratio: f64,
    pub abs_window_hours: i64,
    pub rel_window_days: i64,
    /// Ordered fallback list for the baseline creatinine.
    pub baseline_strategy: Vec<BaselineStep>,
    /// eGFR assumed when back-calculating a baseline from demographics.
    pub imputation_egfr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineStep {
    /// Minimum creatinine in the 7 days before surgery: [surgery−7d, surgery).
    PreopMinimum7d,
    /// Mean of creatinine values 8–365 days before surgery.
    HistoricalMean8To365d,
    /// Back-calculate creatinine from the race-agnostic CKD-EPI 2021 equation
    /// at the configured reference eGFR for the patient's age and sex.
    EgfrImputation,
}

impl Default for KdigoConfig {
    fn default() -> Self {
        KdigoConfig {
            abs_increase_mg_dl: 0.3,
            rel_ratio: 1.5,
            abs_window_hours: 48,
            rel_window_days: 7,
            baseline_strategy: vec![
                BaselineStep::PreopMinimum7d,
                BaselineStep::HistoricalMean8To365d,
                BaselineStep::EgfrImputation,
            ],
            imputation_egfr: 75.0,
        }
    }
}

impl KdigoConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.abs_increase_mg_dl > 0.0)
            || !(self.rel_ratio > 0.0)
            || self.abs_window_hours <= 0
            || self.rel_window_days <= 0
            || !(self.imputation_egfr > 0.0)
        {
            return Err(CoreError::Config("KDIGO thresholds must all be positive".into()));
        }
        if self.baseline_strategy.is_empty() {
            return Err(CoreError::Config("KDIGO baseline strategy must not be empty".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// ICU / MV / mortality
// ---------------------------------------------------------------------------

/// True iff any procedure with an ICU code is dated inside the window.
pub fn label_icu(procedures: &[ProcedureRow], window: &OutcomeWindow, codes: &CodeSets) -> bool {
    procedures
        .iter()
        .any(|p| window.contains(p.event_date) && codes.icu_procedures.contains(&normalize_code(&p.code)))
}

/// True iff any MV diagnosis or MV procedure code is dated inside the window.
pub fn label_mv(
    diagnoses: &[DiagnosisRow],
    procedures: &[ProcedureRow],
    window: &OutcomeWindow,
    codes: &CodeSets,
) -> bool {
    diagnoses
        .iter()
        .any(|d| window.contains(d.event_date) && codes.mv_diagnoses.contains(&normalize_code(&d.code)))
        || procedures
            .iter()
            .any(|p| window.contains(p.event_date) && codes.mv_procedures.contains(&normalize_code(&p.code)))
}

/// In-hospital mortality: death dated in [surgery_date, discharge_date].
/// A death dated before admission is a data-quality problem; it is logged
/// and labeled false.
pub fn label_mortality(
    death_date: Option<NaiveDate>,
    admit_date: NaiveDate,
    window: &OutcomeWindow,
) -> bool {
    match death_date {
        None => false,
        Some(d) if d < admit_date => {
            log::warn!("death date {d} precedes admission {admit_date}; labeling mortality false");
            false
        }
        Some(d) => window.contains(d),
    }
}

// ---------------------------------------------------------------------------
// CKD-EPI 2021 (race-agnostic)
// ---------------------------------------------------------------------------

/// eGFR in mL/min/1.73m² from serum creatinine (mg/dL), age (years) and sex,
/// per the 2021 race-agnostic CKD-EPI refit:
/// 142 · min(Scr/κ,1)^α · max(Scr/κ,1)^−1.200 · 0.9938^age · (1.012 if female).
pub fn ckd_epi_2021_egfr(scr_mg_dl: f64, age_years: f64, female: bool) -> f64 {
    let (kappa, alpha) = if female { (0.7, -0.241) } else { (0.9, -0.302) };
    let ratio = scr_mg_dl / kappa;
    let sex_mult = if female { 1.012 } else { 1.0 };
    142.0 * ratio.min(1.0).powf(alpha) * ratio.max(1.0).powf(-1.200) * 0.9938f64.powf(age_years) * sex_mult
}

/// Invert the CKD-EPI 2021 equation: the serum creatinine at which a patient
/// of this age and sex has exactly `target_egfr`. Closed form: both branches
/// of the spline are monotone power laws, continuous at Scr = κ.
pub fn back_calculate_scr(target_egfr: f64, age_years: f64, female: bool) -> f64 {
    let (kappa, alpha) = if female { (0.7, -0.241) } else { (0.9, -0.302) };
    let sex_mult = if female { 1.012 } else { 1.0 };
    let factor = 142.0 * 0.9938f64.powf(age_years) * sex_mult;
    let t = target_egfr / factor; // = min(r,1)^α · max(r,1)^−1.2 at the solution r = Scr/κ
    if t >= 1.0 {
        // below-κ branch: t = r^α with r ≤ 1
        kappa * t.powf(1.0 / alpha)
    } else {
        // above-κ branch: t = r^−1.2 with r > 1
        kappa * t.powf(-1.0 / 1.2)
    }
}

// ---------------------------------------------------------------------------
// Baseline creatinine
// ---------------------------------------------------------------------------

/// A cleaned creatinine series: (timestamp, mg/dL), sorted by (time, value).
pub type CreatinineSeries = Vec<(NaiveDateTime, f64)>;

/// Extract the patient's plausibility-cleaned creatinine series from a bundle.
pub fn creatinine_series(bundle: &EncounterBundle, ranges: &PlausibilityRanges) -> CreatinineSeries {
    let mut series: CreatinineSeries = bundle
        .labs
        .iter()
        .filter(|l| l.analyte == Analyte::Creatinine && ranges.contains(Analyte::Creatinine, l.value))
        .map(|l| (l.taken_datetime, l.value))
        .collect();
    series.sort_by(|a, b| a.partial_cmp(b).unwrap());
    series
}

/// Ordered-fallback baseline estimate; absent only when every configured step
/// fails (no usable labs and, for the imputation step, unknown sex).
pub fn estimate_baseline_scr(
    creatinine: &[(NaiveDateTime, f64)],
    surgery_date: NaiveDate,
    sex: Sex,
    birth_date: NaiveDate,
    cfg: &KdigoConfig,
) -> Option<f64> {
    for step in &cfg.baseline_strategy {
        match step {
            BaselineStep::PreopMinimum7d => {
                let lo = surgery_date - Duration::days(7);
                let min = creatinine
                    .iter()
                    .filter(|(t, _)| t.date() >= lo && t.date() < surgery_date)
                    .map(|&(_, v)| v)
                    .fold(f64::INFINITY, f64::min);
                if min.is_finite() {
                    return Some(min);
                }
            }
            BaselineStep::HistoricalMean8To365d => {
                let lo = surgery_date - Duration::days(365);
                let hi = surgery_date - Duration::days(8);
                let values: Vec<f64> = creatinine
                    .iter()
                    .filter(|(t, _)| t.date() >= lo && t.date() <= hi)
                    .map(|&(_, v)| v)
                    .collect();
                if !values.is_empty() {
                    return Some(values.iter().sum::<f64>() / values.len() as f64);
                }
            }
            BaselineStep::EgfrImputation => {
                let female = match sex {
                    Sex::Female => true,
                    Sex::Male => false,
                    Sex::Unknown => continue,
                };
                let age = age_at(birth_date, surgery_date) as f64;
                return Some(back_calculate_scr(cfg.imputation_egfr, age, female));
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// KDIGO AKI
// ---------------------------------------------------------------------------

/// Reported lab values are decimal quantities; compare thresholds with a
/// one-nano tolerance so a rise of exactly 0.30 written as 1.2 − 0.9 still
/// qualifies despite binary floating point.
pub const DECIMAL_EPS: f64 = 1e-9;

/// Internal staging alongside the binary label. Only the binary label is
/// consumed by the pipeline; stages 2–3 are derived from the ratio rule
/// (≥2.0× / ≥3.0× baseline, or an absolute value ≥4.0 mg/dL).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AkiAssessment {
    pub label: bool,
    pub max_stage: u8,
}

/// Evaluate the KDIGO creatinine criteria over the in-window series.
///
/// Returns `None` when the window contains no creatinine value. The label is
/// true iff either:
///  (a) some in-window value ≥ `rel_ratio` × baseline, dated within
///      `rel_window_days` of the surgery date or of a strictly earlier
///      in-window nadir (a value ≤ every in-window value at or before its
///      own timestamp), or
///  (b) some strictly later in-window value exceeds a strictly earlier one by
///      ≥ `abs_increase_mg_dl` within `abs_window_hours`.
pub fn assess_aki(
    series: &[(NaiveDateTime, f64)],
    baseline: f64,
    window: &OutcomeWindow,
    cfg: &KdigoConfig,
) -> Option<AkiAssessment> {
    let mut inw: Vec<(NaiveDateTime, f64)> = series
        .iter()
        .filter(|(t, _)| window.contains(t.date()))
        .copied()
        .collect();
    if inw.is_empty() {
        return None;
    }
    inw.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Rule (b): sliding 48-hour minimum over strictly earlier values, via a
    // monotonic deque. `pending` holds same-timestamp entries not yet
    // eligible as comparison points.
    let mut rule_b = false;
    let abs_window = Duration::hours(cfg.abs_window_hours);
    let mut deque: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut pending_time: Option<NaiveDateTime> = None;
    for (j, &(tj, vj)) in inw.iter().enumerate() {
        if pending_time != Some(tj) {
            for &i in &pending {
                while let Some(&back) = deque.back() {
                    if inw[back].1 >= inw[i].1 {
                        deque.pop_back();
                    } else {
                        break;
                    }
                }
                deque.push_back(i);
            }
            pending.clear();
            pending_time = Some(tj);
        }
        while let Some(&front) = deque.front() {
            if tj - inw[front].0 > abs_window {
                deque.pop_front();
            } else {
                break;
            }
        }
        if let Some(&front) = deque.front() {
            if vj - inw[front].1 >= cfg.abs_increase_mg_dl - DECIMAL_EPS {
                rule_b = true;
            }
        }
        pending.push(j);
    }

    // Rule (a): running nadirs restart the 7-day clock. Sorting by (time,
    // value) makes the prefix minimum equivalent to "≤ every value at or
    // before this timestamp".
    let mut rule_a = false;
    let mut max_qualifying = f64::NEG_INFINITY;
    let mut prefix_min = f64::INFINITY;
    let mut last_nadir: Option<(NaiveDateTime, usize)> = None; // latest strictly-earlier nadir
    let mut nadir_dates: Vec<Option<NaiveDate>> = vec![None; inw.len()]; // latest nadir date strictly before j
    let mut i = 0;
    while i < inw.len() {
        // process one timestamp group at a time so "strictly earlier" is exact
        let t = inw[i].0;
        let group_end = inw[i..].iter().position(|&(ti, _)| ti != t).map(|p| i + p).unwrap_or(inw.len());
        for slot in nadir_dates.iter_mut().take(group_end).skip(i) {
            *slot = last_nadir.map(|(tn, _)| tn.date());
        }
        for (k, &(_, v)) in inw.iter().enumerate().take(group_end).skip(i) {
            if v <= prefix_min {
                prefix_min = v;
                last_nadir = Some((t, k));
            }
        }
        i = group_end;
    }
    for (j, &(tj, vj)) in inw.iter().enumerate() {
        if vj >= cfg.rel_ratio * baseline - DECIMAL_EPS {
            let from_surgery = (tj.date() - window.surgery_date).num_days() <= cfg.rel_window_days;
            let from_nadir = nadir_dates[j]
                .map(|nd| (tj.date() - nd).num_days() <= cfg.rel_window_days)
                .unwrap_or(false);
            if from_surgery || from_nadir {
                rule_a = true;
                max_qualifying = max_qualifying.max(vj);
            }
        }
    }

    let label = rule_a || rule_b;
    let max_stage = if !label {
        0
    } else if rule_a
        && (max_qualifying >= 3.0 * baseline - DECIMAL_EPS || max_qualifying >= 4.0 - DECIMAL_EPS)
    {
        3
    } else if rule_a && max_qualifying >= 2.0 * baseline - DECIMAL_EPS {
        2
    } else {
        1
    };
    Some(AkiAssessment { label, max_stage })
}

/// Binary KDIGO label; see [`assess_aki`].
pub fn label_aki(
    series: &[(NaiveDateTime, f64)],
    baseline: f64,
    window: &OutcomeWindow,
    cfg: &KdigoConfig,
) -> Option<bool> {
    assess_aki(series, baseline, window, cfg).map(|a| a.label)
}

// ---------------------------------------------------------------------------
// Per-bundle and per-cohort labeling
// ---------------------------------------------------------------------------

/// Compute all four outcome labels for one bundle. `esrd_excluded` encounters
/// get `aki = None` regardless of their creatinine series.
pub fn label_bundle(
    bundle: &EncounterBundle,
    codes: &CodeSets,
    kdigo: &KdigoConfig,
    ranges: &PlausibilityRanges,
    esrd_excluded: bool,
) -> OutcomeLabels {
    let window = OutcomeWindow {
        surgery_date: bundle.surgery_date(),
        discharge_date: bundle.discharge_date(),
    };
    let aki = if esrd_excluded {
        None
    } else {
        let series = creatinine_series(bundle, ranges);
        estimate_baseline_scr(
            &series,
            window.surgery_date,
            bundle.demographics.sex,
            bundle.demographics.birth_date,
            kdigo,
        )
        .and_then(|baseline| label_aki(&series, baseline, &window, kdigo))
    };
    OutcomeLabels {
        icu_need: label_icu(&bundle.procedures, &window, codes),
        mv_need: label_mv(&bundle.diagnoses, &bundle.procedures, &window, codes),
        aki,
        mortality: label_mortality(bundle.death_date, bundle.admit_date(), &window),
    }
}

/// Label every bundle (data-parallel when the `parallel` feature is on),
/// applying the ESRD exclusion from `codes.esrd_diagnoses`.
pub fn label_cohort(
    bundles: &[EncounterBundle],
    codes: &PhenotypeCodes,
    kdigo: &KdigoConfig,
    ranges: &PlausibilityRanges,
) -> Vec<OutcomeLabels> {
    let sets = CodeSets::compile(codes);
    periop_par::map_slice(bundles, |b| {
        let esrd = has_esrd_at_surgery(b, &codes.esrd_diagnoses);
        label_bundle(b, &sets, kdigo, ranges, esrd)
    })
}
