//! Threshold-free and thresholded discrimination metrics.
//!
//! All functions take parallel `scores`/`labels` slices where `labels[i]`
//! is true for the positive class. Classification at a threshold `t` is
//! "positive iff score >= t" throughout.

use crate::error::EvalError;

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let n_pos = labels.iter().filter(|&&y| y).count();
    (n_pos, labels.len() - n_pos)
}

/// Area under the ROC curve via the Mann-Whitney statistic
/// `P(s+ > s-) + 1/2 P(s+ = s-)`, computed with one sort and midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedAuroc { n_pos, n_neg });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum midranks of the positive class over tied blocks.
    let mut rank_sum_pos = 0.0_f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; block spans ranks i+1 ..= j
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_block = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += midrank * pos_in_block as f64;
        i = j;
    }

    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Area under the precision-recall step function: descending-score sweep,
/// tied scores processed as one block, area accumulated as
/// `sum(delta_recall * precision_at_threshold)`.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(EvalError::NoPositives);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0_f64;
    let mut area = 0.0_f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..j] {
            if labels[k] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// Observed score maximizing Youden's J = sensitivity + specificity - 1.
/// Ties go to the smallest such threshold, which maximizes sensitivity.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedAuroc { n_pos, n_neg });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Ascending sweep: at threshold t = scores[k], positives are the rows
    // with score >= t, so counts below the current block are the excluded ones.
    let mut best_t = f64::NAN;
    let mut best_j = f64::NEG_INFINITY;
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let t = scores[order[i]];
        let sens = (n_pos - pos_below) as f64 / n_pos as f64;
        let spec = neg_below as f64 / n_neg as f64;
        let youden = sens + spec - 1.0;
        if youden > best_j {
            best_j = youden;
            best_t = t;
        }
        for &k in &order[i..j] {
            if labels[k] {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
        }
        i = j;
    }
    Ok(best_t)
}

/// Confusion-matrix derived metrics at a threshold. `None` fields are 0/0
/// cases (e.g. PPV with zero predicted positives), never NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfusionMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> ConfusionMetrics {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    ConfusionMetrics {
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        ppv: ratio(tp, tp + fp),
        npv: ratio(tn, tn + fn_),
        tp,
        fp,
        tn,
        fn_,
    }
}
