//! Per-outcome metric bundles, subgroup stratification and the doctor-id
//! sensitivity comparison.

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::metrics::{auprc, auroc, confusion_metrics, youden_threshold};

/// Point estimate with a 95% bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiValue {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// One row of the Table-2-style performance report.
///
/// Confusion metrics are `None` when their denominator is zero on the full
/// evaluation set (0/0 is reported as missing, never NaN).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricBundle {
    pub auroc: CiValue,
    pub auprc: CiValue,
    pub sensitivity: Option<CiValue>,
    pub specificity: Option<CiValue>,
    pub ppv: Option<CiValue>,
    pub npv: Option<CiValue>,
    pub threshold: f64,
    pub n: usize,
    pub n_pos: usize,
}

/// How the operating threshold for a (sub)group is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdChoice {
    /// Re-optimize Youden's J on the evaluated rows themselves.
    Optimize,
    /// Use a threshold selected elsewhere (e.g. overall or train-side OOF).
    Fixed(f64),
}

use crate::bootstrap::resample_rng;

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

fn ci_from(values: &mut Vec<f64>, point: f64, b: usize) -> Result<CiValue, EvalError> {
    let degenerate = b - values.len();
    if degenerate * 2 > b {
        return Err(EvalError::InsufficientClassBalance {
            degenerate,
            total: b,
        });
    }
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(CiValue {
        point,
        lo: quantile_sorted(values, 0.025),
        hi: quantile_sorted(values, 0.975),
    })
}

/// Evaluate all six metrics with bootstrap intervals in a single resampling
/// pass. The threshold is fixed before resampling; each resample reuses the
/// deterministic per-resample RNG streams of [`crate::bootstrap_ci`].
pub fn metric_bundle(
    scores: &[f64],
    labels: &[bool],
    threshold: ThresholdChoice,
    b: usize,
    seed: u64,
) -> Result<MetricBundle, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if b < 100 {
        return Err(EvalError::TooFewResamples(b));
    }
    let n = scores.len();
    let threshold = match threshold {
        ThresholdChoice::Optimize => youden_threshold(scores, labels)?,
        ThresholdChoice::Fixed(t) => t,
    };

    let auroc_point = auroc(scores, labels)?;
    let auprc_point = auprc(scores, labels)?;
    let conf = confusion_metrics(scores, labels, threshold);
    let n_pos = conf.tp + conf.fn_;

    // Per-resample: all six metrics at the fixed threshold.
    struct ResampleMetrics {
        auroc: Option<f64>,
        auprc: Option<f64>,
        sens: Option<f64>,
        spec: Option<f64>,
        ppv: Option<f64>,
        npv: Option<f64>,
    }
    let per_resample: Vec<ResampleMetrics> = periop_par::map_indices(b, |i| {
        use rand::Rng;
        let mut rng = resample_rng(seed, i as u64);
        let mut s = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            s.push(scores[k]);
            y.push(labels[k]);
        }
        let c = confusion_metrics(&s, &y, threshold);
        ResampleMetrics {
            auroc: auroc(&s, &y).ok(),
            auprc: auprc(&s, &y).ok(),
            sens: c.sensitivity,
            spec: c.specificity,
            ppv: c.ppv,
            npv: c.npv,
        }
    });

    let collect = |f: &dyn Fn(&ResampleMetrics) -> Option<f64>| -> Vec<f64> {
        per_resample.iter().filter_map(f).collect()
    };
    let mut auroc_vals = collect(&|m| m.auroc);
    let mut auprc_vals = collect(&|m| m.auprc);
    let mut sens_vals = collect(&|m| m.sens);
    let mut spec_vals = collect(&|m| m.spec);
    let mut ppv_vals = collect(&|m| m.ppv);
    let mut npv_vals = collect(&|m| m.npv);

    let optional_ci = |vals: &mut Vec<f64>, point: Option<f64>| -> Result<Option<CiValue>, EvalError> {
        match point {
            None => Ok(None),
            Some(p) => ci_from(vals, p, b).map(Some),
        }
    };

    Ok(MetricBundle {
        auroc: ci_from(&mut auroc_vals, auroc_point, b)?,
        auprc: ci_from(&mut auprc_vals, auprc_point, b)?,
        sensitivity: optional_ci(&mut sens_vals, conf.sensitivity)?,
        specificity: optional_ci(&mut spec_vals, conf.specificity)?,
        ppv: optional_ci(&mut ppv_vals, conf.ppv)?,
        npv: optional_ci(&mut npv_vals, conf.npv)?,
        threshold,
        n,
        n_pos,
    })
}

/// Demographics needed to place one evaluated row into the Table 3-5
/// stratifications. Missing race counts as non-African-American; unknown
/// sex is grouped with male so the sex predicates stay a partition.
#[derive(Debug, Clone, Copy)]
pub struct SubgroupRow {
    pub female: bool,
    pub african_american: bool,
    pub age_years: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupResult {
    pub group: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricBundle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unevaluable_reason: Option<String>,
}

/// Table 3-5 analog for one outcome: each stratification evaluated with its
/// own threshold policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSubgroups {
    pub sex: Vec<SubgroupResult>,
    pub race: Vec<SubgroupResult>,
    pub age: Vec<SubgroupResult>,
}

fn eval_partition(
    scores: &[f64],
    labels: &[bool],
    mask: &[bool],
    names: (&str, &str),
    threshold: ThresholdChoice,
    b: usize,
    seed: u64,
) -> Vec<SubgroupResult> {
    let mut out = Vec::with_capacity(2);
    for (in_group, name) in [(true, names.0), (false, names.1)] {
        let idx: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m == in_group)
            .map(|(i, _)| i)
            .collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        match metric_bundle(&s, &y, threshold, b, seed) {
            Ok(m) => out.push(SubgroupResult {
                group: name.to_string(),
                metrics: Some(m),
                unevaluable_reason: None,
            }),
            Err(e) => out.push(SubgroupResult {
                group: name.to_string(),
                metrics: None,
                unevaluable_reason: Some(e.to_string()),
            }),
        }
    }
    out
}

/// Stratified evaluation over sex, race (AA vs non-AA) and age (<=65 vs >65).
///
/// `inherited_threshold` carries the overall operating point; when
/// `per_subgroup_threshold` is set each subgroup re-optimizes Youden's J on
/// its own rows, matching the per-table reporting.
pub fn subgroup_eval(
    scores: &[f64],
    labels: &[bool],
    rows: &[SubgroupRow],
    per_subgroup_threshold: bool,
    inherited_threshold: f64,
    b: usize,
    seed: u64,
) -> Result<OutcomeSubgroups, EvalError> {
    if scores.len() != rows.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: rows.len(),
        });
    }
    let choice = if per_subgroup_threshold {
        ThresholdChoice::Optimize
    } else {
        ThresholdChoice::Fixed(inherited_threshold)
    };
    let female: Vec<bool> = rows.iter().map(|r| r.female).collect();
    let aa: Vec<bool> = rows.iter().map(|r| r.african_american).collect();
    let young: Vec<bool> = rows.iter().map(|r| r.age_years <= 65).collect();
    Ok(OutcomeSubgroups {
        sex: eval_partition(scores, labels, &female, ("Female", "Male"), choice, b, seed),
        race: eval_partition(
            scores,
            labels,
            &aa,
            ("African American", "Non-African American"),
            choice,
            b,
            seed,
        ),
        age: eval_partition(scores, labels, &young, ("<=65", ">65"), choice, b, seed),
    })
}

/// One evaluated model tied to the fingerprint of the rows it was scored on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedModel {
    pub eval_fingerprint: String,
    pub metrics: MetricBundle,
}

/// Table 6 analog row pair: the same outcome without ("N") and with ("Y")
/// the doctor-id feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRow {
    pub with_doctor_id: String,
    pub metrics: MetricBundle,
}

pub fn compare_models(
    without: &EvaluatedModel,
    with: &EvaluatedModel,
) -> Result<Vec<SensitivityRow>, EvalError> {
    if without.eval_fingerprint != with.eval_fingerprint {
        return Err(EvalError::MismatchedEvalSets {
            left: without.eval_fingerprint.clone(),
            right: with.eval_fingerprint.clone(),
        });
    }
    Ok(vec![
        SensitivityRow {
            with_doctor_id: "N".to_string(),
            metrics: without.metrics.clone(),
        },
        SensitivityRow {
            with_doctor_id: "Y".to_string(),
            metrics: with.metrics.clone(),
        },
    ])
}
