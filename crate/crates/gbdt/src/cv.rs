//! Stratified k-fold cross-validated grid search.
//!
//! Selection metric is the mean validation-fold AUROC; that choice is an
//! assumption (recorded in the report header) since the source method
//! statement names the tuned parameters but not the selection criterion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GbdtError;
use crate::matrix::FeatureMatrix;
use crate::params::{GridSpec, TrainParams};
use crate::train::train;

pub const CV_SELECTION_NOTE: &str =
    "selection metric: mean validation-fold AUROC (assumed; source does not state the CV criterion)";

/// Fold id per row, stratified: each class is shuffled deterministically
/// and dealt round-robin, so per-fold class counts differ by at most one.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<u32>, GbdtError> {
    let n_pos = y.iter().filter(|&&v| v).count();
    let n_neg = y.len() - n_pos;
    if k < 2 || n_pos < k || n_neg < k {
        return Err(GbdtError::UnstratifiableFold { k, n_pos, n_neg });
    }
    let mut fold = vec![0u32; y.len()];
    for (class, stream) in [(true, 0xF01Du64), (false, 0xF01E)] {
        let mut idx: Vec<u32> = (0..y.len() as u32)
            .filter(|&i| y[i as usize] == class)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        shuffle(&mut idx, &mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            fold[i as usize] = (pos % k) as u32;
        }
    }
    Ok(fold)
}

fn shuffle(v: &mut [u32], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPointSummary {
    pub params: TrainParams,
    pub fold_aurocs: Vec<f64>,
    pub mean_auroc: f64,
}

/// The full CV table: one row per grid point with per-fold AUROCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvReport {
    pub selection_note: String,
    pub k: usize,
    pub points: Vec<CvPointSummary>,
    pub best_index: usize,
}

/// Exhaustive grid search. Returns the winning params (ties broken by
/// smaller n_estimators, then smaller max_depth, then grid order) plus the
/// full table.
pub fn grid_search_cv(
    x: &FeatureMatrix,
    y: &[bool],
    grid: &GridSpec,
    base: &TrainParams,
    k: usize,
    seed: u64,
) -> Result<(TrainParams, CvReport), GbdtError> {
    if grid.is_empty() {
        return Err(GbdtError::EmptyGrid);
    }
    let fold = stratified_folds(y, k, seed)?;
    let points = grid.points(base);

    // Pre-split the data once per fold.
    let mut splits = Vec::with_capacity(k);
    for f in 0..k as u32 {
        let train_rows: Vec<u32> = (0..y.len() as u32).filter(|&i| fold[i as usize] != f).collect();
        let val_rows: Vec<u32> = (0..y.len() as u32).filter(|&i| fold[i as usize] == f).collect();
        let x_train = x.subset_rows(&train_rows);
        let y_train: Vec<bool> = train_rows.iter().map(|&i| y[i as usize]).collect();
        let x_val = x.subset_rows(&val_rows);
        let y_val: Vec<bool> = val_rows.iter().map(|&i| y[i as usize]).collect();
        splits.push((x_train, y_train, x_val, y_val));
    }

    // Parallel over (point, fold) jobs; order-preserving collect keeps the
    // table deterministic.
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..k).map(move |f| (p, f)))
        .collect();
    let fold_results: Vec<Result<f64, GbdtError>> = periop_par::map_slice(&jobs, |&(p, f)| {
        let (x_train, y_train, x_val, y_val) = &splits[f];
        let model = train(x_train, y_train, &points[p])?;
        let scores = model.predict_proba(x_val)?;
        Ok(periop_eval::auroc(&scores, y_val)?)
    });

    let mut summaries = Vec::with_capacity(points.len());
    for (p, params) in points.iter().enumerate() {
        let mut fold_aurocs = Vec::with_capacity(k);
        for f in 0..k {
            match &fold_results[p * k + f] {
                Ok(a) => fold_aurocs.push(*a),
                Err(e) => {
                    return Err(GbdtError::BadParam(format!(
                        "CV fold {f} failed for grid point {p}: {e}"
                    )))
                }
            }
        }
        let mean_auroc = fold_aurocs.iter().sum::<f64>() / k as f64;
        summaries.push(CvPointSummary {
            params: params.clone(),
            fold_aurocs,
            mean_auroc,
        });
    }

    let mut best = 0usize;
    for i in 1..summaries.len() {
        let (a, b) = (&summaries[i], &summaries[best]);
        let better = a.mean_auroc > b.mean_auroc
            || (a.mean_auroc == b.mean_auroc
                && (a.params.n_estimators < b.params.n_estimators
                    || (a.params.n_estimators == b.params.n_estimators
                        && a.params.max_depth < b.params.max_depth)));
        if better {
            best = i;
        }
    }

    let report = CvReport {
        selection_note: CV_SELECTION_NOTE.to_string(),
        k,
        points: summaries,
        best_index: best,
    };
    Ok((points[best].clone(), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let y: Vec<bool> = (0..103).map(|i| i % 5 == 0).collect();
        let a = stratified_folds(&y, 5, 7).unwrap();
        let b = stratified_folds(&y, 5, 7).unwrap();
        assert_eq!(a, b);
        for f in 0..5u32 {
            let pos = (0..y.len()).filter(|&i| a[i] == f && y[i]).count();
            let neg = (0..y.len()).filter(|&i| a[i] == f && !y[i]).count();
            assert!(pos >= 1, "fold {f} lost all positives");
            assert!(neg >= 1);
            // round-robin: per-fold class counts differ by at most one
            assert!((pos as i64 - (21 / 5) as i64).abs() <= 1);
        }
    }

    #[test]
    fn unstratifiable_reports_class_counts() {
        let y = vec![true, false, false, false, false, false];
        let err = stratified_folds(&y, 5, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1 positives"), "got: {msg}");
        assert!(msg.contains("5 negatives"), "got: {msg}");
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
        let x = FeatureMatrix::from_rows(names(2), &rows).unwrap();
        let grid = GridSpec {
            n_estimators: vec![10],
            gamma: vec![0.0],
            max_depth: vec![2],
            subsample: vec![1.0],
            colsample_bytree: vec![1.0],
        };
        let (best, report) =
            grid_search_cv(&x, &y, &grid, &TrainParams::default(), 5, 3).unwrap();
        assert_eq!(best.n_estimators, 10);
        assert_eq!(report.points.len(), 1);
        assert_eq!(report.points[0].fold_aurocs.len(), 5);
        assert_eq!(report.best_index, 0);
        assert!(report.selection_note.contains("AUROC"));
    }

    #[test]
    fn three_way_interaction_needs_depth() {
        // y = parity of three binary features (plus slight noise-free
        // determinism): depth 1 cannot express it, depth 3+ can
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..400usize {
            let a = (i >> 0) & 1;
            let b = (i >> 1) & 1;
            let c = (i >> 2) & 1;
            rows.push(vec![a as f64, b as f64, c as f64]);
            y.push((a ^ b ^ c) == 1);
        }
        let x = FeatureMatrix::from_rows(names(3), &rows).unwrap();
        let grid = GridSpec {
            n_estimators: vec![40],
            gamma: vec![0.0],
            max_depth: vec![1, 6],
            subsample: vec![1.0],
            colsample_bytree: vec![1.0],
        };
        let (best, report) =
            grid_search_cv(&x, &y, &grid, &TrainParams::default(), 5, 11).unwrap();
        assert_eq!(best.max_depth, 6, "report: {:?}", report.points);
        let shallow = &report.points[0];
        let deep = &report.points[1];
        assert!(deep.mean_auroc > 0.95);
        assert!(shallow.mean_auroc < 0.7);
    }

    #[test]
    fn exact_tie_prefers_smaller_n_estimators() {
        // two grid points that differ only in gamma large enough to kill
        // all splits in both -> identical constant models -> identical CV
        // AUROC; then a second pair differing in n_estimators
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 9) as f64]).collect();
        let y: Vec<bool> = (0..50).map(|i| i % 2 == 0).collect();
        let x = FeatureMatrix::from_rows(names(1), &rows).unwrap();
        let grid = GridSpec {
            n_estimators: vec![20, 5],
            gamma: vec![1e9],
            max_depth: vec![2],
            subsample: vec![1.0],
            colsample_bytree: vec![1.0],
        };
        let (best, report) =
            grid_search_cv(&x, &y, &grid, &TrainParams::default(), 5, 1).unwrap();
        assert_eq!(
            report.points[0].mean_auroc, report.points[1].mean_auroc,
            "constant models must tie"
        );
        assert_eq!(best.n_estimators, 5);
    }
}
