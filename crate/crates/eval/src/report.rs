//! Serializable report shapes shared by the CLI `evaluate` and `report`
//! stages. Every report carries a schema version and the provenance of the
//! run that produced it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::subgroup::{MetricBundle, OutcomeSubgroups, SensitivityRow};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Provenance block embedded in every emitted artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub schema_version: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub created_by: String,
}

/// Table 2 analog: one metric bundle per outcome on the held-out set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub provenance: Provenance,
    pub threshold_policy: String,
    pub bootstrap_resamples: usize,
    pub outcomes: BTreeMap<String, MetricBundle>,
}

/// Tables 3-5 analog: stratified bundles per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupsReport {
    pub provenance: Provenance,
    pub per_subgroup_threshold: bool,
    pub outcomes: BTreeMap<String, OutcomeSubgroups>,
}

/// Table 6 analog: N/Y doctor-id rows per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityReport {
    pub provenance: Provenance,
    pub outcomes: BTreeMap<String, Vec<SensitivityRow>>,
}

/// One row of the Table 1 cohort characterization CSV.
///
/// `p_value` is `None` for rows that only restate a category count under a
/// parent test (the test statistic lives on the parent row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTableRow {
    pub characteristic: String,
    pub level: String,
    pub overall: String,
    pub outcome_absent: String,
    pub outcome_present: String,
    pub test: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

/// Serialize cohort rows as CSV with a fixed header.
pub fn cohort_table_csv(rows: &[CohortTableRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "characteristic",
        "level",
        "overall",
        "outcome_absent",
        "outcome_present",
        "test",
        "p_value",
    ])?;
    for r in rows {
        w.write_record([
            r.characteristic.as_str(),
            r.level.as_str(),
            r.overall.as_str(),
            r.outcome_absent.as_str(),
            r.outcome_present.as_str(),
            r.test.as_str(),
            &r.p_value.map(|p| format!("{p:.6}")).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().expect("csv writer into_inner");
    Ok(String::from_utf8(bytes).expect("csv output is utf8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgroup::CiValue;

    fn dummy_bundle() -> MetricBundle {
        let c = CiValue {
            point: 0.9,
            lo: 0.85,
            hi: 0.95,
        };
        MetricBundle {
            auroc: c,
            auprc: c,
            sensitivity: Some(c),
            specificity: Some(c),
            ppv: Some(c),
            npv: None,
            threshold: 0.3,
            n: 100,
            n_pos: 10,
        }
    }

    #[test]
    fn metrics_report_roundtrip() {
        let mut outcomes = BTreeMap::new();
        outcomes.insert("icu".to_string(), dummy_bundle());
        let report = MetricsReport {
            provenance: Provenance {
                schema_version: REPORT_SCHEMA_VERSION,
                config_sha256: "deadbeef".into(),
                seed: 42,
                created_by: "evaluate".into(),
            },
            threshold_policy: "validation".into(),
            bootstrap_resamples: 1000,
            outcomes,
        };
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        // npv was None -> serialized as null, stays missing after roundtrip
        assert!(back.outcomes["icu"].npv.is_none());
    }

    #[test]
    fn unknown_fields_rejected() {
        let json = r#"{"provenance":{"schema_version":1,"config_sha256":"x","seed":1,"created_by":"t","extra":true},"threshold_policy":"validation","bootstrap_resamples":1000,"outcomes":{}}"#;
        assert!(serde_json::from_str::<MetricsReport>(json).is_err());
    }

    #[test]
    fn cohort_csv_shape() {
        let rows = vec![
            CohortTableRow {
                characteristic: "Age".into(),
                level: "median (IQR)".into(),
                overall: "58 (45-69)".into(),
                outcome_absent: "57 (44-68)".into(),
                outcome_present: "66 (55-75)".into(),
                test: "mann-whitney".into(),
                p_value: Some(0.001),
            },
            CohortTableRow {
                characteristic: "Sex".into(),
                level: "Female".into(),
                overall: "5000 (50.0%)".into(),
                outcome_absent: "4700 (50.5%)".into(),
                outcome_present: "300 (42.9%)".into(),
                test: "chi-square".into(),
                p_value: None,
            },
        ];
        let csv_text = cohort_table_csv(&rows).unwrap();
        let mut lines = csv_text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "characteristic,level,overall,outcome_absent,outcome_present,test,p_value"
        );
        assert!(csv_text.contains("mann-whitney"));
        assert!(csv_text.contains("0.001000"));
        assert_eq!(csv_text.lines().count(), 3);
    }
}
