//! Cohort characteristics table: the whole cohort split by composite outcome
//! status (any selected outcome positive), with a chi-square test per
//! categorical characteristic and a Mann-Whitney U test per continuous one.

use chrono::Datelike;
use periop_core::types::{
    age_at, EncounterBundle, Ethnicity, OutcomeLabels, Payer, Race, Sex,
};
use periop_eval::{chi_square_test, mann_whitney_u, CohortTableRow};

use crate::error::CliError;
use crate::pipeline::label_of;

/// Composite endpoint used to split the table columns: true when any of the
/// selected outcomes is positive (undefined AKI counts as not positive).
fn composite(labels: &OutcomeLabels, outcomes: &[String]) -> bool {
    outcomes.iter().any(|o| label_of(labels, o) == Some(true))
}

fn pct(count: usize, total: usize) -> String {
    if total == 0 {
        format!("{count} (0.0%)")
    } else {
        format!("{count} ({:.1}%)", 100.0 * count as f64 / total as f64)
    }
}

fn median_iqr(values: &mut Vec<f64>) -> String {
    if values.is_empty() {
        return "—".into();
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        // Linear interpolation between closest ranks.
        let pos = p * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        values[lo] + (values[hi] - values[lo]) * frac
    };
    format!("{:.1} [{:.1}–{:.1}]", q(0.5), q(0.25), q(0.75))
}

/// One categorical characteristic: count rows per level plus a chi-square
/// test on the level × outcome contingency table (on the first row).
fn categorical_rows(
    characteristic: &str,
    levels: &[(&str, Vec<bool>)],
    outcome_flags: &[bool],
) -> Vec<CohortTableRow> {
    let total = outcome_flags.len();
    let absent_total = outcome_flags.iter().filter(|&&f| !f).count();
    let present_total = total - absent_total;

    let mut counts: Vec<(String, usize, usize, usize)> = Vec::new();
    for (name, mask) in levels {
        let overall = mask.iter().filter(|&&m| m).count();
        let absent = mask
            .iter()
            .zip(outcome_flags)
            .filter(|(&m, &f)| m && !f)
            .count();
        let present = overall - absent;
        counts.push((name.to_string(), overall, absent, present));
    }

    // Contingency table over levels that actually occur.
    let table: Vec<Vec<f64>> = counts
        .iter()
        .filter(|(_, overall, _, _)| *overall > 0)
        .map(|(_, _, absent, present)| vec![*absent as f64, *present as f64])
        .collect();
    let p_value = if table.len() >= 2 {
        chi_square_test(&table).ok().map(|(_, p)| p)
    } else {
        None
    };

    counts
        .into_iter()
        .enumerate()
        .map(|(i, (level, overall, absent, present))| CohortTableRow {
            characteristic: characteristic.to_string(),
            level,
            overall: pct(overall, total),
            outcome_absent: pct(absent, absent_total),
            outcome_present: pct(present, present_total),
            test: if i == 0 { "chi-square".into() } else { String::new() },
            p_value: if i == 0 { p_value } else { None },
        })
        .collect()
}

/// One continuous characteristic: median [IQR] per column plus a
/// Mann-Whitney U test between the outcome-absent and outcome-present groups.
fn continuous_row(
    characteristic: &str,
    values: &[Option<f64>],
    outcome_flags: &[bool],
) -> CohortTableRow {
    let mut all: Vec<f64> = values.iter().flatten().copied().collect();
    let mut absent: Vec<f64> = values
        .iter()
        .zip(outcome_flags)
        .filter(|(v, &f)| v.is_some() && !f)
        .map(|(v, _)| v.unwrap())
        .collect();
    let mut present: Vec<f64> = values
        .iter()
        .zip(outcome_flags)
        .filter(|(v, &f)| v.is_some() && f)
        .map(|(v, _)| v.unwrap())
        .collect();
    let p_value = mann_whitney_u(&absent, &present).ok().map(|(_, p)| p);
    CohortTableRow {
        characteristic: characteristic.to_string(),
        level: "median [IQR]".into(),
        overall: median_iqr(&mut all),
        outcome_absent: median_iqr(&mut absent),
        outcome_present: median_iqr(&mut present),
        test: "mann-whitney-u".into(),
        p_value,
    }
}

pub fn build_rows(
    bundles: &[EncounterBundle],
    labels: &[(String, OutcomeLabels)],
    outcomes: &[String],
) -> Result<Vec<CohortTableRow>, CliError> {
    if bundles.len() != labels.len() {
        return Err(CliError::Data(format!(
            "cohort has {} encounters but labels.csv has {} rows",
            bundles.len(),
            labels.len()
        )));
    }
    let flags: Vec<bool> = labels.iter().map(|(_, l)| composite(l, outcomes)).collect();
    let total = bundles.len();
    let present = flags.iter().filter(|&&f| f).count();

    let mut rows = Vec::new();
    rows.push(CohortTableRow {
        characteristic: "n".into(),
        level: String::new(),
        overall: total.to_string(),
        outcome_absent: (total - present).to_string(),
        outcome_present: present.to_string(),
        test: String::new(),
        p_value: None,
    });

    let ages: Vec<Option<f64>> = bundles
        .iter()
        .map(|b| Some(age_at(b.demographics.birth_date, b.surgery_date()) as f64))
        .collect();
    rows.push(continuous_row("age_years", &ages, &flags));

    let sex_levels = [
        ("female", bundles.iter().map(|b| b.demographics.sex == Sex::Female).collect()),
        ("male_or_unknown", bundles.iter().map(|b| b.demographics.sex != Sex::Female).collect()),
    ];
    rows.extend(categorical_rows("sex", &sex_levels, &flags));

    let race_levels = [
        ("white", bundles.iter().map(|b| b.demographics.race == Race::White).collect()),
        (
            "african_american",
            bundles.iter().map(|b| b.demographics.race == Race::AfricanAmerican).collect(),
        ),
        (
            "other_or_missing",
            bundles
                .iter()
                .map(|b| {
                    matches!(b.demographics.race, Race::Other | Race::Missing)
                })
                .collect(),
        ),
    ];
    rows.extend(categorical_rows("race", &race_levels, &flags));

    let eth_levels = [
        (
            "hispanic",
            bundles.iter().map(|b| b.demographics.ethnicity == Ethnicity::Hispanic).collect(),
        ),
        (
            "non_hispanic",
            bundles.iter().map(|b| b.demographics.ethnicity == Ethnicity::NonHispanic).collect(),
        ),
        (
            "missing",
            bundles.iter().map(|b| b.demographics.ethnicity == Ethnicity::Missing).collect(),
        ),
    ];
    rows.extend(categorical_rows("ethnicity", &eth_levels, &flags));

    let payer_levels = [
        ("private", bundles.iter().map(|b| b.encounter.payer == Payer::Private).collect()),
        ("medicare", bundles.iter().map(|b| b.encounter.payer == Payer::Medicare).collect()),
        ("medicaid", bundles.iter().map(|b| b.encounter.payer == Payer::Medicaid).collect()),
        ("uninsured", bundles.iter().map(|b| b.encounter.payer == Payer::Uninsured).collect()),
        ("missing", bundles.iter().map(|b| b.encounter.payer == Payer::Missing).collect()),
    ];
    rows.extend(categorical_rows("insurance", &payer_levels, &flags));

    let night_levels = [
        ("night", bundles.iter().map(|b| b.encounter.admit_at_night).collect()),
        ("day", bundles.iter().map(|b| !b.encounter.admit_at_night).collect()),
    ];
    rows.extend(categorical_rows("night_admission", &night_levels, &flags));

    let weekend = |b: &EncounterBundle| {
        matches!(
            b.encounter.admit_datetime.weekday(),
            chrono::Weekday::Sat | chrono::Weekday::Sun
        )
    };
    let weekend_levels = [
        ("weekend", bundles.iter().map(weekend).collect()),
        ("weekday", bundles.iter().map(|b| !weekend(b)).collect()),
    ];
    rows.extend(categorical_rows("weekend_admission", &weekend_levels, &flags));

    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_iqr_formats() {
        let mut v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(median_iqr(&mut v), "3.0 [2.0–4.0]");
        assert_eq!(median_iqr(&mut Vec::new()), "—");
    }

    #[test]
    fn categorical_rows_put_the_test_on_the_first_row() {
        let flags = vec![false, false, true, true];
        let levels = [
            ("a", vec![true, true, false, false]),
            ("b", vec![false, false, true, true]),
        ];
        let rows = categorical_rows("x", &levels, &flags);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].test, "chi-square");
        assert!(rows[0].p_value.is_some());
        assert_eq!(rows[1].test, "");
        assert!(rows[1].p_value.is_none());
        assert_eq!(rows[0].overall, "2 (50.0%)");
        assert_eq!(rows[0].outcome_absent, "2 (100.0%)");
        assert_eq!(rows[0].outcome_present, "0 (0.0%)");
    }
}
