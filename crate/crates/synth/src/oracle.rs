//! Independent straight-line re-derivation of outcome labels from generated
//! events. Shares no decision logic with the production phenotyper: code
//! matching, baseline fallback, and the KDIGO rules are re-implemented here
//! from their definitions (exhaustive pairwise loops, bisection instead of
//! the closed-form eGFR inversion) so agreement between the two is a real
//! cross-check.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use periop_core::phenotype::PhenotypeCodes;
use periop_core::types::{OutcomeLabels, Sex};

/// Generated events for one encounter, as the generator knows them
/// (planted implausible values excluded before this is built).
#[derive(Debug, Clone)]
pub struct OracleInput {
    pub admit_date: Option<NaiveDate>,
    pub surgery_date: Option<NaiveDate>,
    pub discharge_date: Option<NaiveDate>,
    /// (code, event date) for every procedure row on this encounter.
    pub procedures: Vec<(String, NaiveDate)>,
    /// (code, event date) for every diagnosis row on this encounter.
    pub diagnoses: Vec<(String, NaiveDate)>,
    /// The patient's full clean creatinine series.
    pub creatinine: Vec<(NaiveDateTime, f64)>,
    pub death_date: Option<NaiveDate>,
    pub sex: Sex,
    pub birth_date: Option<NaiveDate>,
    pub esrd_before_surgery: bool,
}

impl Default for OracleInput {
    fn default() -> Self {
        OracleInput {
            admit_date: None,
            surgery_date: None,
            discharge_date: None,
            procedures: Vec::new(),
            diagnoses: Vec::new(),
            creatinine: Vec::new(),
            death_date: None,
            sex: Sex::Unknown,
            birth_date: None,
            esrd_before_surgery: false,
        }
    }
}

fn canon(code: &str) -> String {
    code.chars().filter(|c| *c != '.').collect::<String>().to_ascii_uppercase()
}

fn in_list(code: &str, list: &[String]) -> bool {
    let c = canon(code);
    list.iter().any(|l| canon(l) == c)
}

fn whole_years(birth: NaiveDate, as_of: NaiveDate) -> i32 {
    use chrono::Datelike;
    let mut years = as_of.year() - birth.year();
    // birthday not yet reached this year → one less; Feb 29 counts as Mar 1
    let (bm, bd) = if birth.month() == 2 && birth.day() == 29 { (3, 1) } else { (birth.month(), birth.day()) };
    if (as_of.month(), as_of.day()) < (bm, bd) {
        years -= 1;
    }
    years
}

fn egfr_2021(scr: f64, age: f64, female: bool) -> f64 {
    let (kappa, alpha) = if female { (0.7, -0.241) } else { (0.9, -0.302) };
    let r = scr / kappa;
    let sex_mult = if female { 1.012 } else { 1.0 };
    142.0 * r.min(1.0).powf(alpha) * r.max(1.0).powf(-1.2) * 0.9938f64.powf(age) * sex_mult
}

/// Invert the eGFR equation by bisection on the (strictly decreasing)
/// forward formula.
pub fn scr_at_egfr_bisect(target: f64, age: f64, female: bool) -> f64 {
    let (mut lo, mut hi) = (0.01f64, 60.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if egfr_2021(mid, age, female) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const EPS: f64 = 1e-9;

fn oracle_baseline(input: &OracleInput, surgery: NaiveDate) -> Option<f64> {
    // 1. minimum in the 7 days before surgery
    let preop: Vec<f64> = input
        .creatinine
        .iter()
        .filter(|(t, _)| t.date() >= surgery - Duration::days(7) && t.date() < surgery)
        .map(|&(_, v)| v)
        .collect();
    if !preop.is_empty() {
        return Some(preop.iter().copied().fold(f64::INFINITY, f64::min));
    }
    // 2. mean over 8–365 days before surgery
    let hist: Vec<f64> = input
        .creatinine
        .iter()
        .filter(|(t, _)| {
            t.date() >= surgery - Duration::days(365) && t.date() <= surgery - Duration::days(8)
        })
        .map(|&(_, v)| v)
        .collect();
    if !hist.is_empty() {
        return Some(hist.iter().sum::<f64>() / hist.len() as f64);
    }
    // 3. back-calculate at eGFR 75 for the patient's age and sex
    let female = match input.sex {
        Sex::Female => true,
        Sex::Male => false,
        Sex::Unknown => return None,
    };
    let birth = input.birth_date?;
    Some(scr_at_egfr_bisect(75.0, whole_years(birth, surgery) as f64, female))
}

fn oracle_aki(input: &OracleInput, surgery: NaiveDate, discharge: NaiveDate) -> Option<bool> {
    if input.esrd_before_surgery {
        return None;
    }
    let inw: Vec<(NaiveDateTime, f64)> = input
        .creatinine
        .iter()
        .filter(|(t, _)| t.date() >= surgery && t.date() <= discharge)
        .copied()
        .collect();
    if inw.is_empty() {
        return None;
    }
    let baseline = oracle_baseline(input, surgery)?;

    // absolute rise ≥ 0.3 mg/dL across any strictly-ordered pair within 48h
    let mut rise = false;
    for &(ti, vi) in &inw {
        for &(tj, vj) in &inw {
            if ti < tj && tj - ti <= Duration::hours(48) && vj - vi >= 0.3 - EPS {
                rise = true;
            }
        }
    }

    // ratio ≥ 1.5× baseline within 7 days of surgery or of a prior nadir
    let is_nadir =
        |i: usize| inw.iter().all(|&(tk, vk)| tk > inw[i].0 || vk >= inw[i].1);
    let mut ratio = false;
    for &(tj, vj) in &inw {
        if vj < 1.5 * baseline - EPS {
            continue;
        }
        if (tj.date() - surgery).num_days() <= 7 {
            ratio = true;
            continue;
        }
        for (i, &(ti, _)) in inw.iter().enumerate() {
            if ti < tj && is_nadir(i) && (tj.date() - ti.date()).num_days() <= 7 {
                ratio = true;
            }
        }
    }
    Some(rise || ratio)
}

/// Re-derive all four labels for one encounter from its generated events.
pub fn oracle_labels(input: &OracleInput, codes: &PhenotypeCodes) -> OutcomeLabels {
    let surgery = input.surgery_date.expect("oracle needs a surgery date");
    let discharge = input.discharge_date.expect("oracle needs a discharge date");
    let admit = input.admit_date.expect("oracle needs an admit date");
    let in_window = |d: NaiveDate| d >= surgery && d <= discharge;

    let icu = input
        .procedures
        .iter()
        .any(|(code, date)| in_window(*date) && in_list(code, &codes.icu_procedures));

    let mv = input
        .diagnoses
        .iter()
        .any(|(code, date)| in_window(*date) && in_list(code, &codes.mv_diagnoses))
        || input
            .procedures
            .iter()
            .any(|(code, date)| in_window(*date) && in_list(code, &codes.mv_procedures));

    let mortality = match input.death_date {
        Some(d) => d >= admit && in_window(d),
        None => false,
    };

    OutcomeLabels {
        icu_need: icu,
        mv_need: mv,
        aki: oracle_aki(input, surgery, discharge),
        mortality,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use periop_core::data::default_phenotype_codes;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }
    fn dt(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").unwrap()
    }

    fn base_input() -> OracleInput {
        OracleInput {
            admit_date: Some(d("2019-03-01")),
            surgery_date: Some(d("2019-03-02")),
            discharge_date: Some(d("2019-03-10")),
            sex: Sex::Female,
            birth_date: Some(d("1955-01-01")),
            ..OracleInput::default()
        }
    }

    #[test]
    fn zero_postop_events_mean_all_labels_false() {
        let input = base_input();
        let labels = oracle_labels(&input, &default_phenotype_codes());
        assert!(!labels.icu_need && !labels.mv_need && !labels.mortality);
        assert_eq!(labels.aki, None, "no creatinine at all → unlabelable");
    }

    #[test]
    fn planted_048h_jump_of_exactly_030_is_positive() {
        let mut input = base_input();
        input.creatinine = vec![
            (dt("2019-02-28T08:00:00"), 0.9), // preop baseline
            (dt("2019-03-03T08:00:00"), 0.9),
            (dt("2019-03-04T08:00:00"), 1.2), // +0.30 in 24h
        ];
        let labels = oracle_labels(&input, &default_phenotype_codes());
        assert_eq!(labels.aki, Some(true));
    }

    #[test]
    fn window_boundaries_hold() {
        let codes = default_phenotype_codes();
        let mut input = base_input();
        input.procedures = vec![("99291".to_string(), d("2019-03-11"))]; // after discharge
        assert!(!oracle_labels(&input, &codes).icu_need);
        input.procedures = vec![("99291".to_string(), d("2019-03-10"))]; // on discharge
        assert!(oracle_labels(&input, &codes).icu_need);
        input.diagnoses = vec![("Z99.11".to_string(), d("2019-03-02"))];
        assert!(oracle_labels(&input, &codes).mv_need);
        input.death_date = Some(d("2019-03-09"));
        assert!(oracle_labels(&input, &codes).mortality);
        input.death_date = Some(d("2019-04-09"));
        assert!(!oracle_labels(&input, &codes).mortality);
    }

    #[test]
    fn esrd_suppresses_aki() {
        let mut input = base_input();
        input.esrd_before_surgery = true;
        input.creatinine = vec![
            (dt("2019-03-01T08:00:00"), 2.0),
            (dt("2019-03-03T08:00:00"), 4.0),
        ];
        assert_eq!(oracle_labels(&input, &default_phenotype_codes()).aki, None);
    }

    #[test]
    fn bisection_inversion_round_trips() {
        for age in [25.0, 50.0, 80.0] {
            for female in [true, false] {
                let scr = scr_at_egfr_bisect(75.0, age, female);
                assert!((egfr_2021(scr, age, female) - 75.0).abs() < 1e-6);
            }
        }
    }
}
