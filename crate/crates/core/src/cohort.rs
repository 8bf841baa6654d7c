//! Cohort assembly: inclusion/exclusion rules, per-encounter bundles, the
//! chronological train/validation split, and the ESRD exclusion for AKI.

use std::collections::{HashMap, HashSet};

use crate::error::CoreError;
use crate::ingest::RawTables;
use crate::rvu::{select_index_surgery, RvuTable};
use crate::types::*;

/// Counts for the exclusion ladder, applied in this order per encounter:
/// non-eligible encounter type → unknown patient (a reject, not a tally) →
/// age under 18 at admit → no major surgery.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExclusionTally {
    pub non_inpatient: u64,
    pub under_18: u64,
    pub no_major_surgery: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortReject {
    pub encounter_id: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct CohortBuild {
    /// Retained bundles, sorted by (admit_datetime, encounter_id).
    pub bundles: Vec<EncounterBundle>,
    pub rejects: Vec<CohortReject>,
    pub exclusions: ExclusionTally,
    /// Coverage diagnostic: CPT procedure rows (among index-surgery
    /// candidates) with no RVU fee-schedule entry.
    pub unknown_cpt_rows: u64,
}

/// Assemble per-encounter bundles from the loaded tables.
///
/// Retains EI/IP/OS encounters of known adult patients that contain at least
/// one major surgery; every retained bundle carries exactly one
/// [`IndexSurgery`]. Historical rows of retained patients (labs, dispensings,
/// diagnoses from other admissions) ride along in the bundle as lookback
/// context even though those admissions themselves are not cohort members.
pub fn build_cohort(raw: &RawTables, rvu: &RvuTable) -> CohortBuild {
    let mut out = CohortBuild::default();

    let demo_by_patient: HashMap<&str, &DemographicRow> =
        raw.demographics.iter().map(|d| (d.patient_id.as_str(), d)).collect();

    let mut procs_by_encounter: HashMap<&str, Vec<&ProcedureRow>> = HashMap::new();
    for p in &raw.procedures {
        procs_by_encounter.entry(p.encounter_id.as_str()).or_default().push(p);
    }
    let mut dx_by_encounter: HashMap<&str, Vec<&DiagnosisRow>> = HashMap::new();
    for d in &raw.diagnoses {
        dx_by_encounter.entry(d.encounter_id.as_str()).or_default().push(d);
    }

    // Diagnosis history is patient-level: map each diagnosis row to its
    // encounter's patient.
    let patient_of_encounter: HashMap<&str, &str> = raw
        .encounters
        .iter()
        .map(|e| (e.encounter_id.as_str(), e.patient_id.as_str()))
        .collect();
    let mut dx_by_patient: HashMap<&str, Vec<&DiagnosisRow>> = HashMap::new();
    for d in &raw.diagnoses {
        if let Some(pid) = patient_of_encounter.get(d.encounter_id.as_str()) {
            dx_by_patient.entry(pid).or_default().push(d);
        }
    }

    let mut labs_by_patient: HashMap<&str, Vec<&LabRow>> = HashMap::new();
    for l in &raw.labs {
        labs_by_patient.entry(l.patient_id.as_str()).or_default().push(l);
    }
    let mut meds_by_patient: HashMap<&str, Vec<&MedRow>> = HashMap::new();
    for m in &raw.meds {
        meds_by_patient.entry(m.patient_id.as_str()).or_default().push(m);
    }
    let death_by_patient: HashMap<&str, &DeathRow> =
        raw.deaths.iter().map(|d| (d.patient_id.as_str(), d)).collect();

    for enc in &raw.encounters {
        if !enc.encounter_type.is_cohort_eligible() {
            out.exclusions.non_inpatient += 1;
            continue;
        }
        let Some(demo) = demo_by_patient.get(enc.patient_id.as_str()) else {
            out.rejects.push(CohortReject {
                encounter_id: enc.encounter_id.clone(),
                reason: format!("unknown patient '{}'", enc.patient_id),
            });
            continue;
        };
        if age_at(demo.birth_date, enc.admit_datetime.date()) < 18 {
            out.exclusions.under_18 += 1;
            continue;
        }

        // Index-surgery candidacy: this encounter's procedure rows dated
        // inside the stay (admit ≤ event_date ≤ discharge).
        let admit_date = enc.admit_datetime.date();
        let discharge_date = enc.discharge_datetime.date();
        let candidates: Vec<ProcedureRow> = procs_by_encounter
            .get(enc.encounter_id.as_str())
            .map(|rows| {
                rows.iter()
                    .filter(|p| p.event_date >= admit_date && p.event_date <= discharge_date)
                    .map(|p| (*p).clone())
                    .collect()
            })
            .unwrap_or_default();
        let selection = select_index_surgery(&candidates, rvu);
        out.unknown_cpt_rows += selection.unknown_cpt_rows;
        let Some(index_surgery) = selection.index else {
            out.exclusions.no_major_surgery += 1;
            continue;
        };

        out.bundles.push(EncounterBundle {
            encounter: enc.clone(),
            demographics: (*demo).clone(),
            procedures: procs_by_encounter
                .get(enc.encounter_id.as_str())
                .map(|v| v.iter().map(|p| (*p).clone()).collect())
                .unwrap_or_default(),
            diagnoses: dx_by_encounter
                .get(enc.encounter_id.as_str())
                .map(|v| v.iter().map(|d| (*d).clone()).collect())
                .unwrap_or_default(),
            dx_history: dx_by_patient
                .get(enc.patient_id.as_str())
                .map(|v| v.iter().map(|d| (*d).clone()).collect())
                .unwrap_or_default(),
            labs: labs_by_patient
                .get(enc.patient_id.as_str())
                .map(|v| v.iter().map(|l| (*l).clone()).collect())
                .unwrap_or_default(),
            meds: meds_by_patient
                .get(enc.patient_id.as_str())
                .map(|v| v.iter().map(|m| (*m).clone()).collect())
                .unwrap_or_default(),
            death_date: death_by_patient.get(enc.patient_id.as_str()).map(|d| d.death_date),
            index_surgery,
        });
    }

    out.bundles.sort_by(|a, b| {
        (a.encounter.admit_datetime, &a.encounter.encounter_id)
            .cmp(&(b.encounter.admit_datetime, &b.encounter.encounter_id))
    });
    out
}

/// Chronological split: sort by admit instant (encounter id as tiebreak),
/// send the first ⌈fraction·N⌉ to train, then pull every encounter sharing
/// the boundary instant into train so the cut is a clean point in time.
pub fn temporal_split(cohort: &[EncounterBundle], train_fraction: f64) -> Result<CohortSplit, CoreError> {
    if cohort.is_empty() {
        return Err(CoreError::EmptyCohort);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CoreError::BadFraction(train_fraction));
    }
    let mut order: Vec<(chrono::NaiveDateTime, &str)> = cohort
        .iter()
        .map(|b| (b.encounter.admit_datetime, b.encounter_id()))
        .collect();
    order.sort();

    let n = order.len();
    // ⌈fraction·N⌉ with a one-ulp guard so that e.g. 0.7 × 10 stays 7 even
    // though the product is marginally above 7.0 in binary.
    let raw = train_fraction * n as f64;
    let n_train = ((raw - 1e-9).ceil().max(1.0) as usize).min(n);

    let boundary = order[n_train - 1].0;
    let mut cut = n_train;
    while cut < n && order[cut].0 == boundary {
        cut += 1;
    }
    if cut == n {
        log::warn!(
            "temporal split left the validation set empty (all {n} encounters at or before the boundary instant)"
        );
    }

    Ok(CohortSplit {
        train: order[..cut].iter().map(|(_, id)| id.to_string()).collect(),
        valid: order[cut..].iter().map(|(_, id)| id.to_string()).collect(),
        split_instant: boundary,
    })
}

fn normalize_code(code: &str) -> String {
    code.chars().filter(|c| *c != '.').collect::<String>().to_ascii_uppercase()
}

/// True when the patient carries any ESRD diagnosis dated on or before the
/// index surgery (codes matched exactly, ignoring dots and case).
pub fn has_esrd_at_surgery(bundle: &EncounterBundle, esrd_codes: &[String]) -> bool {
    let wanted: HashSet<String> = esrd_codes.iter().map(|c| normalize_code(c)).collect();
    bundle
        .dx_history
        .iter()
        .any(|d| d.event_date <= bundle.surgery_date() && wanted.contains(&normalize_code(&d.code)))
}

/// The AKI modeling cohort: every bundle without prior-or-same-day ESRD.
/// The other three outcomes keep the full cohort.
pub fn exclude_esrd_for_aki<'a>(
    cohort: &'a [EncounterBundle],
    esrd_codes: &[String],
) -> Vec<&'a EncounterBundle> {
    cohort.iter().filter(|b| !has_esrd_at_surgery(b, esrd_codes)).collect()
}
