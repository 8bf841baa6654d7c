//! Two-pass deterministic generation.
//!
//! Pass A drafts every index encounter independently — demographics, stay
//! frame, structural arm, condition menu, lab panel, and the planted linear
//! risk score — from per-entity counter-derived RNG streams, so output is
//! byte-identical for a given config regardless of thread count. The four
//! outcome intercepts are then calibrated by bisection against the
//! prevalence targets. Pass B samples labels, plants the matching clinical
//! events with wide margins around every decision threshold, re-derives each
//! label through the independent oracle (a generation-time invariant), and
//! computes the expected feature vector straight from the draft quantities.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use periop_core::data::default_plausibility_ranges;
use periop_core::features::FeatureValue;
use periop_core::types::{
    age_at, AdmissionSource, Analyte, EncounterType, Ethnicity, Language, MedClass, OutcomeLabels,
    Payer, Race, Sex,
};

use crate::config::{Outcome, SynthConfig};
use crate::expected::{draft_baseline, expected_features, FeatureInputs};
use crate::ground_truth::{exact_auroc, EncounterTruth, ExpectedCounts, GroundTruth};
use crate::menu::{
    is_high_risk_cpt, provider_id, rvu_csv, DxEntry, MajorCpt, CKD_MENU, CONDITION_MENU,
    LAB_PROFILES, MAJOR_CPTS, MED_RATES, MINOR_CPTS, NOISE_DX, N_PROVIDERS, UNKNOWN_CPT,
};
use crate::oracle::{oracle_labels, OracleInput};
use crate::SynthError;

// Stream-id name space: the top byte selects the draw family, the low bits
// carry the entity index, so every quantity has its own reproducible stream.
const STREAM_FRAME: u64 = 1 << 56;
const STREAM_DEMO: u64 = 2 << 56;
const STREAM_CLINICAL: u64 = 3 << 56;
const STREAM_LABS: u64 = 4 << 56;
const STREAM_LABELS: u64 = 5 << 56;
const STREAM_EVENTS: u64 = 6 << 56;
const STREAM_PROVIDERS: u64 = 7 << 56;
const STREAM_BAYES: u64 = 8 << 56;

fn stream(seed: u64, kind: u64, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind | idx as u64);
    rng
}

/// Round to hundredths, the precision lab values are emitted at; the printed
/// decimal re-parses to exactly this f64, keeping file and draft bit-equal.
fn r2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Standard normal via Box–Muller (two uniform draws per call).
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn norm_clip(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    r2((mean + sd * normal(rng)).clamp(lo, hi))
}

/// Weighted choice over cumulative weights; weights need not sum to 1
/// (the remainder goes to the last entry).
fn pick<T: Copy>(rng: &mut ChaCha8Rng, table: &[(T, f64)]) -> T {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(value, w) in table {
        acc += w;
        if u < acc {
            return value;
        }
    }
    table.last().expect("pick table must be non-empty").0
}

const EXCL_NON_INPATIENT: &str = "non_inpatient";
const EXCL_UNDER_18: &str = "under_18";
const EXCL_NO_MAJOR: &str = "no_major_surgery";

/// How the AKI baseline is obtainable for this patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BaselineArm {
    /// Preoperative creatinine exists → baseline is its minimum.
    Normal,
    /// Only historical creatinine → baseline is its mean.
    HistOnly,
    /// No pre-surgical creatinine → back-calculated at the reference eGFR.
    Imputed,
    /// No creatinine anywhere → AKI unlabelable.
    NoCreatinine,
}

/// Everything generated for one index encounter.
struct Draft {
    idx: usize,
    pid: String,
    eid: String,
    hid: String,
    // demographics
    birth: NaiveDate,
    sex: Sex,
    race: Race,
    ethnicity: Ethnicity,
    language: Language,
    // stay frame
    admit: NaiveDateTime,
    discharge: NaiveDateTime,
    etype: EncounterType,
    payer: Payer,
    source: AdmissionSource,
    exclusion: Option<&'static str>,
    // surgery & procedures
    cpt: Option<&'static MajorCpt>,
    surgery: NaiveDate,
    provider_idx: usize,
    minor_rows: Vec<(&'static str, NaiveDate)>,
    unknown_cpt: bool,
    // history & conditions
    h_admit: NaiveDateTime,
    h_discharge: NaiveDateTime,
    dx_entries: Vec<&'static DxEntry>,
    conditions: BTreeSet<&'static str>,
    esrd: bool,
    noise_dx: Vec<&'static str>,
    // meds
    med_rows: Vec<(MedClass, NaiveDate)>,
    meds_in_window: BTreeSet<MedClass>,
    // clean labs in exact emission order (postop creatinine appended later)
    labs: Vec<(Analyte, f64, NaiveDateTime)>,
    height: Option<f64>,
    weight: Option<f64>,
    hist_hgb: Vec<f64>,
    panel: BTreeMap<&'static str, Vec<f64>>,
    baseline_arm: BaselineArm,
    baseline: Option<f64>,
    /// Baseline as the production feature chain sees it (imputation always
    /// reachable); equals `baseline` except on the no-creatinine arm.
    feature_baseline: Option<f64>,
    // planted model
    z: [f64; 4],
    drift_add: f64,
    aki_eligible: bool,
    // pass B
    probs: [Option<f64>; 4],
    labels: Option<OutcomeLabels>,
    postop_creat: Vec<(f64, NaiveDateTime)>,
    icu_dates: Vec<NaiveDate>,
    mv_dx_dates: Vec<NaiveDate>,
    mv_proc_dates: Vec<NaiveDate>,
    death: Option<NaiveDate>,
    implausible: Vec<(Analyte, f64, NaiveDateTime)>,
    expected: Option<BTreeMap<String, FeatureValue>>,
}

impl Draft {
    fn retained(&self) -> bool {
        self.exclusion.is_none()
    }
}

fn hms(date: NaiveDate, h: u32, m: u32, s: u32) -> NaiveDateTime {
    date.and_hms_opt(h, m, s).expect("valid clock time")
}

/// Pass A: one encounter drafted entirely from its own streams.
fn make_draft(cfg: &SynthConfig, i: usize, provider_units: &[f64]) -> Draft {
    let mut fr = stream(cfg.seed, STREAM_FRAME, i);
    let mut de = stream(cfg.seed, STREAM_DEMO, i);
    let mut cl = stream(cfg.seed, STREAM_CLINICAL, i);
    let mut lb = stream(cfg.seed, STREAM_LABS, i);
    let r = &cfg.rates;

    // ---- stay frame -------------------------------------------------------
    let span_days = (cfg.date_end - cfg.date_start).num_days() - 40;
    let admit_day = cfg.date_start + Duration::days((fr.gen::<f64>() * span_days as f64) as i64);
    let admit = hms(admit_day, fr.gen_range(0..24), fr.gen_range(0..60), 0);

    let u = fr.gen::<f64>();
    let exclusion = if u < r.non_inpatient {
        Some(EXCL_NON_INPATIENT)
    } else if u < r.non_inpatient + r.under_18 {
        Some(EXCL_UNDER_18)
    } else if u < r.non_inpatient + r.under_18 + r.no_major_surgery {
        Some(EXCL_NO_MAJOR)
    } else {
        None
    };

    let etype = if exclusion == Some(EXCL_NON_INPATIENT) {
        pick(&mut fr, &[(EncounterType::Outpatient, 0.7), (EncounterType::Other, 0.3)])
    } else {
        pick(
            &mut fr,
            &[(EncounterType::Ip, 0.80), (EncounterType::Ei, 0.15), (EncounterType::Os, 0.05)],
        )
    };

    let surgery_offset = pick(&mut fr, &[(0i64, 0.25), (1, 0.50), (2, 0.25)]);
    let surgery = admit_day + Duration::days(surgery_offset);
    let postop_len = fr.gen_range(3..=14i64);
    let discharge = hms(surgery + Duration::days(postop_len), fr.gen_range(8..18), fr.gen_range(0..60), 0);

    let payer = if fr.gen::<f64>() < r.missing_payer {
        Payer::Missing
    } else {
        pick(
            &mut fr,
            &[
                (Payer::Private, 0.45),
                (Payer::Medicare, 0.35),
                (Payer::Medicaid, 0.15),
                (Payer::Uninsured, 0.05),
            ],
        )
    };
    let source = if fr.gen::<f64>() < r.transfer_admission {
        AdmissionSource::Transfer
    } else if fr.gen::<f64>() < 0.03 {
        AdmissionSource::Missing
    } else {
        AdmissionSource::NonTransfer
    };
    let unknown_cpt = !matches!(exclusion, Some(EXCL_NON_INPATIENT) | Some(EXCL_UNDER_18))
        && fr.gen::<f64>() < r.unknown_cpt_row;

    // ---- demographics -----------------------------------------------------
    let sex = if de.gen::<f64>() < r.unknown_sex {
        Sex::Unknown
    } else if de.gen::<f64>() < 0.5 {
        Sex::Female
    } else {
        Sex::Male
    };
    let age_admit: i32 = if exclusion == Some(EXCL_UNDER_18) {
        de.gen_range(1..=17)
    } else {
        (64.0 + 14.0 * normal(&mut de)).round().clamp(18.0, 95.0) as i32
    };
    // Birth month/day capped at 28 so calendar-age arithmetic has no
    // leap-day corner; the year is chosen to make the admit-date age exact.
    let (bm, bd) = (de.gen_range(1..=12u32), de.gen_range(1..=28u32));
    let by = if (bm, bd) <= (admit_day.month(), admit_day.day()) {
        admit_day.year() - age_admit
    } else {
        admit_day.year() - age_admit - 1
    };
    let birth = NaiveDate::from_ymd_opt(by, bm, bd).expect("day <= 28 is always valid");
    debug_assert_eq!(age_at(birth, admit_day), age_admit);
    let age_surgery = age_at(birth, surgery);

    let race = if de.gen::<f64>() < r.missing_race {
        Race::Missing
    } else {
        pick(&mut de, &[(Race::White, 0.60), (Race::AfricanAmerican, 0.22), (Race::Other, 0.18)])
    };
    let ethnicity = if de.gen::<f64>() < 0.04 {
        Ethnicity::Missing
    } else {
        pick(&mut de, &[(Ethnicity::NonHispanic, 0.82), (Ethnicity::Hispanic, 0.18)])
    };
    let language = if de.gen::<f64>() < r.missing_language {
        Language::Missing
    } else {
        pick(&mut de, &[(Language::English, 0.85), (Language::Other, 0.15)])
    };

    // ---- conditions, providers, meds --------------------------------------
    let mut dx_entries: Vec<&'static DxEntry> = Vec::new();
    let mut conditions: BTreeSet<&'static str> = BTreeSet::new();
    for entry in &CONDITION_MENU {
        if cl.gen::<f64>() < entry.rate {
            dx_entries.push(entry);
            conditions.extend(entry.conditions.iter().copied());
        }
    }
    let cv = cl.gen::<f64>();
    let mut ckd_bump = 1.0;
    let mut acc = 0.0;
    for (entry, bump) in CKD_MENU[..3].iter().zip([1.1, 1.3, 1.6]) {
        acc += entry.rate;
        if cv < acc {
            dx_entries.push(entry);
            conditions.extend(entry.conditions.iter().copied());
            ckd_bump = bump;
            break;
        }
    }
    let esrd = exclusion.is_none() && cl.gen::<f64>() < r.esrd;
    if esrd {
        let entry = &CKD_MENU[3]; // N18.6
        dx_entries.push(entry);
        conditions.extend(entry.conditions.iter().copied());
        ckd_bump = 2.5;
    }
    let mut noise_dx: Vec<&'static str> = Vec::new();
    for code in NOISE_DX {
        if cl.gen::<f64>() < 0.25 {
            noise_dx.push(code);
        }
    }
    let provider_idx = cl.gen_range(0..N_PROVIDERS);

    let mut med_rows: Vec<(MedClass, NaiveDate)> = Vec::new();
    let mut meds_in_window: BTreeSet<MedClass> = BTreeSet::new();
    for (class, rate) in MED_RATES {
        if cl.gen::<f64>() < rate {
            let date = admit_day - Duration::days(cl.gen_range(1..=365));
            med_rows.push((class, date));
            meds_in_window.insert(class);
        }
    }
    if cl.gen::<f64>() < 0.05 {
        // a dispensing just outside the lookback year; must not set any flag
        med_rows.push((MedClass::Statin, admit_day - Duration::days(400)));
    }

    let bv = cl.gen::<f64>();
    let baseline_arm = if bv < r.no_creatinine {
        BaselineArm::NoCreatinine
    } else if bv < r.no_creatinine + r.hist_only_baseline {
        BaselineArm::HistOnly
    } else if bv < r.no_creatinine + r.hist_only_baseline + r.imputed_baseline {
        BaselineArm::Imputed
    } else {
        BaselineArm::Normal
    };

    // ---- labs (emission order is the contract) ----------------------------
    let mut labs: Vec<(Analyte, f64, NaiveDateTime)> = Vec::new();
    let mut height = None;
    let mut weight = None;
    if de.gen::<f64>() >= r.missing_vitals {
        let h = norm_clip(&mut lb, 169.0, 10.0, 145.0, 200.0);
        let w = norm_clip(&mut lb, 82.0, 18.0, 45.0, 160.0);
        let vit_day = admit_day - Duration::days(30);
        labs.push((Analyte::Height, h, hms(vit_day, 9, 0, 0)));
        labs.push((Analyte::Weight, w, hms(vit_day, 9, 5, 0)));
        height = Some(h);
        weight = Some(w);
        if lb.gen::<f64>() < 0.3 {
            // an older weight the latest-wins rule must ignore
            let old = norm_clip(&mut lb, 82.0, 18.0, 45.0, 160.0);
            labs.push((Analyte::Weight, old, hms(admit_day - Duration::days(300), 9, 10, 0)));
        }
        if lb.gen::<f64>() < 0.2 {
            // a height outside the lookback year entirely
            let stale = norm_clip(&mut lb, 169.0, 10.0, 145.0, 200.0);
            labs.push((Analyte::Height, stale, hms(admit_day - Duration::days(380), 9, 15, 0)));
        }
    }

    let hgb_count = pick(&mut lb, &[(0usize, 0.25), (1, 0.30), (2, 0.25), (3, 0.15), (4, 0.05)]);
    let mut hist_hgb = Vec::new();
    for j in (0..hgb_count).rev() {
        let v = norm_clip(&mut lb, 12.8, 1.8, 5.0, 20.0);
        labs.push((Analyte::Hemoglobin, v, hms(admit_day - Duration::days(20 + 40 * j as i64), 8, 30, 0)));
        hist_hgb.push(v);
    }

    // Creatinine scale: profile mean raised with CKD stage so baselines are
    // realistic; the clip keeps every value far inside plausibility.
    let creat_value =
        |rng: &mut ChaCha8Rng| norm_clip(rng, 0.95 * ckd_bump, 0.15, 0.38 * ckd_bump, 5.6);

    let mut hist_creat = Vec::new();
    let hist_creat_count = match baseline_arm {
        BaselineArm::HistOnly => lb.gen_range(1..=3usize),
        BaselineArm::Normal => {
            if lb.gen::<f64>() < 0.5 {
                lb.gen_range(1..=2usize)
            } else {
                0
            }
        }
        _ => 0,
    };
    for j in (0..hist_creat_count).rev() {
        let v = creat_value(&mut lb);
        labs.push((Analyte::Creatinine, v, hms(admit_day - Duration::days(15 + 30 * j as i64), 7, 45, 0)));
        hist_creat.push(v);
    }

    let mut panel: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let mut preop_creat = Vec::new();
    for (a_idx, &(analyte, mean, sd, lo, hi)) in LAB_PROFILES.iter().enumerate() {
        let count = if analyte == Analyte::Creatinine {
            match baseline_arm {
                BaselineArm::Normal => lb.gen_range(1..=3usize),
                _ => 0,
            }
        } else {
            pick(&mut lb, &[(0usize, 0.15), (1, 0.45), (2, 0.30), (3, 0.10)])
        };
        let mut values = Vec::with_capacity(count);
        for day_back in (1..=count as i64).rev() {
            let v = if analyte == Analyte::Creatinine {
                creat_value(&mut lb)
            } else {
                norm_clip(&mut lb, mean, sd, lo, hi)
            };
            labs.push((analyte, v, hms(surgery - Duration::days(day_back), 6, a_idx as u32, 0)));
            values.push(v);
        }
        if analyte == Analyte::Creatinine {
            preop_creat = values.clone();
        }
        panel.insert(analyte.as_str(), values);
    }

    let baseline = match baseline_arm {
        BaselineArm::NoCreatinine => None,
        _ => draft_baseline(&preop_creat, &hist_creat, sex, birth, surgery),
    };
    // The production fallback chain still imputes a baseline from
    // demographics when the patient has no creatinine at all; the AKI label
    // ignores it (no in-window values), but the eGFR feature does not.
    let feature_baseline = baseline.or_else(|| match sex {
        Sex::Unknown => None,
        s => Some(crate::oracle::scr_at_egfr_bisect(
            75.0,
            age_at(birth, surgery) as f64,
            s == Sex::Female,
        )),
    });

    // ---- procedures -------------------------------------------------------
    let cpt: Option<&'static MajorCpt> = if exclusion == Some(EXCL_NO_MAJOR) {
        None
    } else {
        let u: f64 = fr.gen();
        let mut acc = 0.0;
        let mut chosen = &MAJOR_CPTS[MAJOR_CPTS.len() - 1];
        for m in &MAJOR_CPTS {
            acc += m.weight;
            if u < acc {
                chosen = m;
                break;
            }
        }
        Some(chosen)
    };
    let mut minor_rows: Vec<(&'static str, NaiveDate)> = Vec::new();
    let n_minor = if exclusion == Some(EXCL_NO_MAJOR) {
        fr.gen_range(1..=2usize)
    } else {
        fr.gen_range(0..=2usize)
    };
    for k in 0..n_minor {
        minor_rows.push((MINOR_CPTS[(i + k) % MINOR_CPTS.len()].0, admit_day));
    }

    // ---- planted linear score ---------------------------------------------
    let mut z = [0.0f64; 4];
    let mut drift_add = 0.0;
    if exclusion.is_none() {
        let offset = cpt.expect("retained encounters carry a major procedure").logit_offset;
        let interacting = age_surgery > 65
            && sex == Sex::Male
            && cpt.map(|m| is_high_risk_cpt(m.cpt)).unwrap_or(false);
        for (k, o) in Outcome::ALL.iter().enumerate() {
            let c = cfg.coeffs_for(*o);
            let mut score = c.cpt_scale * offset
                + c.age_per_decade * (age_surgery as f64 - 60.0) / 10.0
                + c.baseline_creatinine * (baseline.unwrap_or(1.0) - 1.0)
                + c.provider_sigma * provider_units[provider_idx]
                + if interacting { c.interaction_boost } else { 0.0 };
            if sex == Sex::Male {
                score *= c.male_signal_scale;
            }
            z[k] = score;
        }
        let full_span = (cfg.date_end - cfg.date_start).num_days() as f64;
        let position = (admit_day - cfg.date_start).num_days() as f64 / full_span;
        if position >= 0.7 {
            drift_add = cfg.temporal_drift;
        }
    }
    let aki_eligible = exclusion.is_none()
        && !esrd
        && baseline_arm != BaselineArm::NoCreatinine
        && baseline.is_some();

    let h_admit_day = admit_day - Duration::days(200);
    Draft {
        idx: i,
        pid: format!("p{i:06}"),
        eid: format!("e{i:06}"),
        hid: format!("h{i:06}"),
        birth,
        sex,
        race,
        ethnicity,
        language,
        admit,
        discharge,
        etype,
        payer,
        source,
        exclusion,
        cpt,
        surgery,
        provider_idx,
        minor_rows,
        unknown_cpt,
        h_admit: hms(h_admit_day, 10, 0, 0),
        h_discharge: hms(h_admit_day, 16, 0, 0),
        dx_entries,
        conditions,
        esrd,
        noise_dx,
        med_rows,
        meds_in_window,
        labs,
        height,
        weight,
        hist_hgb,
        panel,
        baseline_arm,
        baseline,
        feature_baseline,
        z,
        drift_add,
        aki_eligible,
        probs: [None; 4],
        labels: None,
        postop_creat: Vec::new(),
        icu_dates: Vec::new(),
        mv_dx_dates: Vec::new(),
        mv_proc_dates: Vec::new(),
        death: None,
        implausible: Vec::new(),
        expected: None,
    }
}

/// Solve `mean sigmoid(b + s_i) = target` for the intercept by bisection;
/// the mean is strictly increasing in `b`, so the root is unique.
fn calibrate_intercept(
    scores: &[f64],
    target: f64,
    outcome: &'static str,
) -> Result<f64, SynthError> {
    let mean_at = |b: f64| scores.iter().map(|s| sigmoid(b + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    if scores.is_empty() || mean_at(lo) > target || mean_at(hi) < target {
        return Err(SynthError::Calibration { outcome, target });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pass B for one draft: sample labels, plant consistent events, verify via
/// the oracle, and freeze the expected features.
fn plant_and_verify(
    cfg: &SynthConfig,
    draft: &mut Draft,
    intercepts: [f64; 4],
    store_expected: bool,
) -> Result<(), SynthError> {
    let mut la = stream(cfg.seed, STREAM_LABELS, draft.idx);
    let u: [f64; 4] = [la.gen(), la.gen(), la.gen(), la.gen()];
    if !draft.retained() {
        return Ok(());
    }
    let mut ev = stream(cfg.seed, STREAM_EVENTS, draft.idx);

    let mut y = [false; 4];
    for (k, o) in Outcome::ALL.iter().enumerate() {
        if *o == Outcome::Aki && !draft.aki_eligible {
            continue;
        }
        let p = sigmoid(intercepts[k] + draft.z[k] + draft.drift_add);
        draft.probs[k] = Some(p);
        y[k] = u[k] < p;
    }
    let discharge_day = draft.discharge.date();
    let admit_day = draft.admit.date();
    let surgery = draft.surgery;
    let in_stay_postop = |d: NaiveDate| d.min(discharge_day);

    // ICU: a critical-care procedure row inside [surgery, discharge];
    // negatives occasionally get one dated before surgery.
    if y[0] {
        draft.icu_dates.push(in_stay_postop(surgery + Duration::days(ev.gen_range(0..=2))));
    } else if surgery > admit_day && ev.gen::<f64>() < 0.05 {
        draft.icu_dates.push(admit_day);
    }

    // MV: dependence-on-ventilator diagnosis (60%) or a ventilation
    // procedure (40%).
    if y[1] {
        let date = in_stay_postop(surgery + Duration::days(ev.gen_range(0..=2)));
        if ev.gen::<f64>() < 0.6 {
            draft.mv_dx_dates.push(date);
        } else {
            draft.mv_proc_dates.push(date);
        }
    } else if surgery > admit_day && ev.gen::<f64>() < 0.04 {
        draft.mv_dx_dates.push(admit_day);
    }

    // Mortality: death on the discharge date; a few negatives die later,
    // outside the outcome window.
    if y[3] {
        draft.death = Some(discharge_day);
    } else if ev.gen::<f64>() < 0.01 {
        draft.death = Some(discharge_day + Duration::days(60));
    }

    // AKI: plant a creatinine trajectory with ≥0.1 mg/dL of margin on the
    // absolute rule and ≥0.2× on the ratio rule, in both directions.
    if draft.aki_eligible {
        let b = draft.baseline.expect("aki-eligible implies a baseline");
        if y[2] {
            let pat: f64 = ev.gen();
            if pat < 0.4 {
                // pure absolute rise: +0.45 within 18 hours
                draft.postop_creat.push((r2(b), hms(surgery, 6, 30, 0)));
                draft
                    .postop_creat
                    .push((r2(b + 0.45), hms(surgery + Duration::days(1), 0, 30, 0)));
            } else if pat < 0.7 {
                // pure ratio: 1.8× baseline three days after surgery
                draft.postop_creat.push((r2(1.8 * b), hms(surgery + Duration::days(3), 8, 0, 0)));
            } else {
                // both rules: 2.05× baseline one day after a baseline-valued draw
                draft.postop_creat.push((r2(b), hms(surgery, 6, 30, 0)));
                draft
                    .postop_creat
                    .push((r2(2.05 * b), hms(surgery + Duration::days(1), 6, 30, 0)));
            }
            if discharge_day >= surgery + Duration::days(5) && ev.gen::<f64>() < 0.5 {
                // recovery draw; +0.02·b over baseline can trigger nothing
                draft.postop_creat.push((r2(1.02 * b), hms(surgery + Duration::days(5), 8, 15, 0)));
            }
        } else {
            // negative: jitter strictly below every threshold (≤ +0.12·b)
            let c = ev.gen_range(1..=3usize);
            for day in [1i64, 2, 4].into_iter().take(c) {
                let v = r2(b * (1.0 + ev.gen::<f64>() * 0.12));
                draft.postop_creat.push((v, hms(surgery + Duration::days(day), 7, 30, 0)));
            }
        }
    } else if draft.baseline.is_some() && draft.baseline_arm != BaselineArm::NoCreatinine {
        // ESRD patients still produce postoperative values; the label must
        // come back unlabeled regardless of what they show.
        let b = draft.baseline.unwrap();
        let c = ev.gen_range(1..=2usize);
        for day in [1i64, 2].into_iter().take(c) {
            let v = r2(b * (1.0 + ev.gen::<f64>() * 0.12));
            draft.postop_creat.push((v, hms(surgery + Duration::days(day), 7, 30, 0)));
        }
    }

    // ---- oracle re-derivation (generator invariant) -----------------------
    let mut procedures: Vec<(String, NaiveDate)> = Vec::new();
    if let Some(m) = draft.cpt {
        procedures.push((m.cpt.to_string(), surgery));
    }
    for (code, date) in &draft.minor_rows {
        procedures.push((code.to_string(), *date));
    }
    if draft.unknown_cpt {
        procedures.push((UNKNOWN_CPT.to_string(), admit_day));
    }
    for d in &draft.icu_dates {
        procedures.push(("99291".to_string(), *d));
    }
    for d in &draft.mv_proc_dates {
        procedures.push(("5A1945Z".to_string(), *d));
    }
    let mut diagnoses: Vec<(String, NaiveDate)> = Vec::new();
    for code in &draft.noise_dx {
        diagnoses.push((code.to_string(), admit_day));
    }
    for d in &draft.mv_dx_dates {
        diagnoses.push(("Z99.11".to_string(), *d));
    }
    let mut creatinine: Vec<(NaiveDateTime, f64)> = draft
        .labs
        .iter()
        .filter(|(a, _, _)| *a == Analyte::Creatinine)
        .map(|&(_, v, t)| (t, v))
        .collect();
    creatinine.extend(draft.postop_creat.iter().map(|&(v, t)| (t, v)));

    let oracle_in = OracleInput {
        admit_date: Some(admit_day),
        surgery_date: Some(surgery),
        discharge_date: Some(discharge_day),
        procedures,
        diagnoses,
        creatinine,
        death_date: draft.death,
        sex: draft.sex,
        birth_date: Some(draft.birth),
        esrd_before_surgery: draft.esrd,
    };
    let labels = oracle_labels(&oracle_in, &periop_core::data::default_phenotype_codes());

    let expected_aki = if draft.aki_eligible { Some(y[2]) } else { None };
    if labels.icu_need != y[0]
        || labels.mv_need != y[1]
        || labels.aki != expected_aki
        || labels.mortality != y[3]
    {
        return Err(SynthError::Invariant(format!(
            "{}: designed labels (icu={}, mv={}, aki={:?}, mortality={}) but oracle found \
             (icu={}, mv={}, aki={:?}, mortality={})",
            draft.eid,
            y[0],
            y[1],
            expected_aki,
            y[3],
            labels.icu_need,
            labels.mv_need,
            labels.aki,
            labels.mortality
        )));
    }
    draft.labels = Some(labels);

    if store_expected {
        let ckd_stages: Vec<&'static str> = draft
            .conditions
            .iter()
            .copied()
            .filter(|c| c.starts_with("ckd_"))
            .collect();
        let inputs = FeatureInputs {
            birth_date: draft.birth,
            sex: draft.sex,
            race: match draft.race {
                Race::Missing => None,
                r => Some(r.as_str()),
            },
            ethnicity: match draft.ethnicity {
                Ethnicity::Missing => None,
                e => Some(e.as_str()),
            },
            language_english: match draft.language {
                Language::English => Some(true),
                Language::Other => Some(false),
                Language::Missing => None,
            },
            payer: draft.payer,
            admission_source: draft.source,
            admit: draft.admit,
            surgery_date: surgery,
            cpt: draft.cpt.map(|m| m.cpt).unwrap_or(""),
            specialty: draft.cpt.map(|m| m.specialty).unwrap_or(""),
            provider_id: "",
            include_doctor_id: false,
            conditions: &draft.conditions,
            ckd_stages: &ckd_stages,
            height_cm: draft.height,
            weight_kg: draft.weight,
            hist_hemoglobin: &draft.hist_hgb,
            preop_panel: &draft.panel,
            meds_in_window: &draft.meds_in_window,
            baseline_scr: draft.feature_baseline,
        };
        draft.expected = Some(expected_features(&inputs));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

fn csv_dt(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

fn csv_d(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

struct Tables {
    demographic: BufWriter<std::fs::File>,
    encounter: BufWriter<std::fs::File>,
    procedures: BufWriter<std::fs::File>,
    diagnosis: BufWriter<std::fs::File>,
    lab: BufWriter<std::fs::File>,
    dispensing: BufWriter<std::fs::File>,
    death: BufWriter<std::fs::File>,
}

fn open_tables(dir: &Path) -> Result<Tables, SynthError> {
    let file = |name: &str| -> Result<BufWriter<std::fs::File>, SynthError> {
        Ok(BufWriter::new(std::fs::File::create(dir.join(name))?))
    };
    let mut t = Tables {
        demographic: file("DEMOGRAPHIC.csv")?,
        encounter: file("ENCOUNTER.csv")?,
        procedures: file("PROCEDURES.csv")?,
        diagnosis: file("DIAGNOSIS.csv")?,
        lab: file("LAB_RESULT_CM.csv")?,
        dispensing: file("DISPENSING.csv")?,
        death: file("DEATH.csv")?,
    };
    writeln!(t.demographic, "patient_id,birth_date,sex,race,ethnicity,primary_language")?;
    // admit_at_night is deliberately omitted so ingestion has to derive it
    writeln!(
        t.encounter,
        "encounter_id,patient_id,admit_datetime,discharge_datetime,encounter_type,payer,admission_source"
    )?;
    writeln!(t.procedures, "encounter_id,code,code_system,event_date,provider_specialty,provider_id")?;
    writeln!(t.diagnosis, "encounter_id,code,code_system,event_date,provider_specialty,provider_id")?;
    writeln!(t.lab, "patient_id,analyte,value,taken_datetime")?;
    writeln!(t.dispensing, "patient_id,med_class,dispense_date")?;
    writeln!(t.death, "patient_id,death_date")?;
    Ok(t)
}

fn write_draft(t: &mut Tables, d: &Draft) -> Result<(), SynthError> {
    writeln!(
        t.demographic,
        "{},{},{},{},{},{}",
        d.pid,
        csv_d(d.birth),
        d.sex.as_str(),
        d.race.as_str(),
        d.ethnicity.as_str(),
        d.language.as_str()
    )?;
    writeln!(
        t.encounter,
        "{},{},{},{},{},{},{}",
        d.eid,
        d.pid,
        csv_dt(d.admit),
        csv_dt(d.discharge),
        d.etype.as_str(),
        d.payer.as_str(),
        d.source.as_str()
    )?;
    // the outpatient history visit carrying the diagnosis history
    writeln!(
        t.encounter,
        "{},{},{},{},outpatient,{},non_transfer",
        d.hid,
        d.pid,
        csv_dt(d.h_admit),
        csv_dt(d.h_discharge),
        d.payer.as_str()
    )?;

    if let Some(m) = d.cpt {
        writeln!(
            t.procedures,
            "{},{},CPT,{},{},{}",
            d.eid,
            m.cpt,
            csv_d(d.surgery),
            m.specialty,
            provider_id(d.provider_idx)
        )?;
    }
    for (code, date) in &d.minor_rows {
        writeln!(t.procedures, "{},{},CPT,{},,", d.eid, code, csv_d(*date))?;
    }
    if d.unknown_cpt {
        writeln!(t.procedures, "{},{},CPT,{},,", d.eid, UNKNOWN_CPT, csv_d(d.admit.date()))?;
    }
    for date in &d.icu_dates {
        writeln!(t.procedures, "{},99291,OTHER,{},,", d.eid, csv_d(*date))?;
    }
    for date in &d.mv_proc_dates {
        writeln!(t.procedures, "{},5A1945Z,ICD10,{},,", d.eid, csv_d(*date))?;
    }

    for entry in &d.dx_entries {
        writeln!(t.diagnosis, "{},{},ICD10,{},,", d.hid, entry.code, csv_d(d.h_admit.date()))?;
    }
    for code in &d.noise_dx {
        writeln!(t.diagnosis, "{},{},ICD10,{},,", d.eid, code, csv_d(d.admit.date()))?;
    }
    for date in &d.mv_dx_dates {
        writeln!(t.diagnosis, "{},Z99.11,ICD10,{},,", d.eid, csv_d(*date))?;
    }

    for (analyte, value, taken) in &d.labs {
        writeln!(t.lab, "{},{},{},{}", d.pid, analyte.as_str(), value, csv_dt(*taken))?;
    }
    for (value, taken) in &d.postop_creat {
        writeln!(t.lab, "{},creatinine,{},{}", d.pid, value, csv_dt(*taken))?;
    }
    for (analyte, value, taken) in &d.implausible {
        writeln!(t.lab, "{},{},{},{}", d.pid, analyte.as_str(), value, csv_dt(*taken))?;
    }

    for (class, date) in &d.med_rows {
        writeln!(t.dispensing, "{},{},{}", d.pid, class.as_str(), csv_d(*date))?;
    }
    if let Some(death) = d.death {
        writeln!(t.death, "{},{}", d.pid, csv_d(death))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Generate the full table set plus `RVU.csv` and `ground_truth.json` into
/// `dir`, returning the ground truth.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<GroundTruth, SynthError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;

    let mut provider_rng = stream(cfg.seed, STREAM_PROVIDERS, 0);
    let provider_units: Vec<f64> = (0..N_PROVIDERS).map(|_| normal(&mut provider_rng)).collect();

    // Pass A, embarrassingly parallel and order-stable.
    let mut drafts: Vec<Draft> =
        periop_par::map_indices(cfg.n_encounters, |i| make_draft(cfg, i, &provider_units));

    // Intercept calibration per outcome over the relevant population.
    let mut intercepts = [0.0f64; 4];
    for (k, o) in Outcome::ALL.iter().enumerate() {
        let scores: Vec<f64> = drafts
            .iter()
            .filter(|d| d.retained() && (*o != Outcome::Aki || d.aki_eligible))
            .map(|d| d.z[k] + d.drift_add)
            .collect();
        intercepts[k] = calibrate_intercept(&scores, cfg.prevalence_for(*o), o.as_str())?;
    }

    // Pass B (sequential: cheap per row, and expected-feature sampling is
    // defined by retained rank).
    let mut retained_rank = 0usize;
    for d in drafts.iter_mut() {
        let store = d.retained()
            && match cfg.expected_feature_sample {
                None => true,
                Some(k) => retained_rank < k,
            };
        if d.retained() {
            retained_rank += 1;
        }
        plant_and_verify(cfg, d, intercepts, store)?;
    }

    // Implausible-value injections, spread across the cohort (or the whole
    // set when nothing is retained), rotating through the analytes.
    let ranges = default_plausibility_ranges();
    let mut counts = ExpectedCounts::default();
    let pool: Vec<usize> = {
        let retained: Vec<usize> =
            drafts.iter().filter(|d| d.retained()).map(|d| d.idx).collect();
        if retained.is_empty() {
            (0..drafts.len()).collect()
        } else {
            retained
        }
    };
    let n_inj = cfg.injections.implausible_lab_values as usize;
    for k in 0..n_inj {
        let idx = pool[(k * pool.len() / n_inj.max(1)) % pool.len()];
        let (analyte, ..) = LAB_PROFILES[k % LAB_PROFILES.len()];
        let (_, hi) = ranges.bounds(analyte);
        let d = &mut drafts[idx];
        let taken = hms(d.surgery + Duration::days(1), 23, 45, (k % 60) as u32);
        d.implausible.push((analyte, hi * 2.0, taken));
        *counts.implausible_lab_values.entry(analyte.as_str().to_string()).or_insert(0) += 1;
    }

    // ---- write tables ------------------------------------------------------
    let mut tables = open_tables(dir)?;
    for d in &drafts {
        write_draft(&mut tables, d)?;
    }
    // demographic-only filler patients
    for i in cfg.n_encounters..cfg.n_patients {
        let mut de = stream(cfg.seed, STREAM_DEMO, i);
        let age: i32 = (55.0 + 18.0 * normal(&mut de)).round().clamp(18.0, 95.0) as i32;
        let (bm, bd) = (de.gen_range(1..=12u32), de.gen_range(1..=28u32));
        let birth = NaiveDate::from_ymd_opt(cfg.date_start.year() - age, bm, bd).unwrap();
        let sex = if de.gen::<f64>() < 0.5 { Sex::Female } else { Sex::Male };
        writeln!(
            tables.demographic,
            "p{i:06},{},{},white,non_hispanic,english",
            csv_d(birth),
            sex.as_str()
        )?;
    }
    // an encounter referencing a patient DEMOGRAPHIC never heard of — the
    // cohort builder must reject (not exclude) it. Only emitted when the
    // config plants exclusions at all, so clean perf configs stay clean.
    let has_exclusion_arms =
        cfg.rates.non_inpatient + cfg.rates.under_18 + cfg.rates.no_major_surgery > 0.0;
    if has_exclusion_arms {
        let day = cfg.date_start + Duration::days(10);
        writeln!(
            tables.encounter,
            "e_orphan,p_orphan,{},{},IP,private,non_transfer",
            csv_dt(hms(day, 10, 0, 0)),
            csv_dt(hms(day + Duration::days(3), 12, 0, 0))
        )?;
        counts.orphan_encounters = 1;
    }
    // malformed lab rows, appended last so line numbers are predictable
    for k in 0..cfg.injections.malformed_lab_rows {
        let d = &drafts[k as usize % drafts.len()];
        let bad_value = if k % 2 == 0 { "NaN" } else { "not-a-number" };
        let taken = hms(d.admit.date() + Duration::days(1), 12, 0, k % 60);
        writeln!(tables.lab, "{},sodium,{},{}", d.pid, bad_value, csv_dt(taken))?;
    }
    counts.malformed_lab_rows = cfg.injections.malformed_lab_rows as u64;

    for w in [
        &mut tables.demographic,
        &mut tables.encounter,
        &mut tables.procedures,
        &mut tables.diagnosis,
        &mut tables.lab,
        &mut tables.dispensing,
        &mut tables.death,
    ] {
        w.flush()?;
    }
    std::fs::write(dir.join("RVU.csv"), rvu_csv())?;

    // ---- tallies -----------------------------------------------------------
    // every indexed patient contributes one outpatient history encounter
    counts.excluded_non_inpatient = cfg.n_encounters as u64;
    for d in &drafts {
        match d.exclusion {
            Some(EXCL_NON_INPATIENT) => counts.excluded_non_inpatient += 1,
            Some(EXCL_UNDER_18) => counts.excluded_under_18 += 1,
            Some(EXCL_NO_MAJOR) => counts.excluded_no_major_surgery += 1,
            _ => {}
        }
        if d.unknown_cpt && matches!(d.exclusion, None | Some(EXCL_NO_MAJOR)) {
            counts.unknown_cpt_rows += 1;
        }
    }
    let cohort_size = drafts.iter().filter(|d| d.retained()).count();

    // ---- realized prevalence and Bayes AUROC -------------------------------
    let mut realized_prevalence = BTreeMap::new();
    let mut labeled = BTreeMap::new();
    let mut bayes_exact = BTreeMap::new();
    let mut bayes_mc = BTreeMap::new();
    for (k, o) in Outcome::ALL.iter().enumerate() {
        let mut pairs: Vec<(f64, bool)> = Vec::new();
        for d in &drafts {
            let (Some(p), Some(labels)) = (d.probs[k], &d.labels) else { continue };
            let y = match o {
                Outcome::Icu => Some(labels.icu_need),
                Outcome::Mv => Some(labels.mv_need),
                Outcome::Aki => labels.aki,
                Outcome::Mortality => Some(labels.mortality),
            };
            if let Some(y) = y {
                pairs.push((p, y));
            }
        }
        labeled.insert(o.as_str().to_string(), pairs.len());
        if pairs.is_empty() {
            continue;
        }
        let positives = pairs.iter().filter(|(_, y)| *y).count();
        realized_prevalence
            .insert(o.as_str().to_string(), positives as f64 / pairs.len() as f64);
        if let Some(auc) = exact_auroc(&pairs) {
            bayes_exact.insert(o.as_str().to_string(), auc);
        }
        let pos: Vec<f64> = pairs.iter().filter(|(_, y)| *y).map(|(p, _)| *p).collect();
        let neg: Vec<f64> = pairs.iter().filter(|(_, y)| !*y).map(|(p, _)| *p).collect();
        if !pos.is_empty() && !neg.is_empty() {
            let mut rng = stream(cfg.seed, STREAM_BAYES, k);
            let mut hits = 0.0f64;
            for _ in 0..cfg.bayes_mc_pairs {
                let a = pos[rng.gen_range(0..pos.len())];
                let b = neg[rng.gen_range(0..neg.len())];
                hits += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
            bayes_mc.insert(o.as_str().to_string(), hits / cfg.bayes_mc_pairs as f64);
        }
    }

    // ---- ground truth ------------------------------------------------------
    let config_sha256 = {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(cfg)?);
        format!("{:x}", hasher.finalize())
    };
    let encounters: Vec<EncounterTruth> = drafts
        .iter()
        .map(|d| EncounterTruth {
            encounter_id: d.eid.clone(),
            patient_id: d.pid.clone(),
            in_cohort: d.retained(),
            exclusion: d.exclusion.map(str::to_string),
            esrd: d.esrd,
            labels: d.labels.clone(),
            event_prob: if d.retained() {
                let mut m = BTreeMap::new();
                for (k, o) in Outcome::ALL.iter().enumerate() {
                    if let Some(p) = d.probs[k] {
                        m.insert(o.as_str().to_string(), p);
                    }
                }
                Some(m)
            } else {
                None
            },
            expected_features: d.expected.clone(),
        })
        .collect();

    let truth = GroundTruth {
        schema_version: 1,
        seed: cfg.seed,
        config_sha256,
        n_patients: cfg.n_patients,
        n_encounters: cfg.n_encounters,
        cohort_size,
        counts,
        realized_prevalence,
        labeled,
        bayes_auroc_exact: bayes_exact,
        bayes_auroc_mc: bayes_mc,
        encounters,
    };
    truth.save(&dir.join("ground_truth.json"))?;
    Ok(truth)
}
