use serde::{Deserialize, Serialize};

use crate::error::GbdtError;

/// Hyperparameters of one boosting run.
///
/// `base_score = None` resolves to the training prevalence (clamped away
/// from 0/1) when `train` is called.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub n_estimators: usize,
    pub gamma: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub lambda: f64,
    pub eta: f64,
    pub base_score: Option<f64>,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            n_estimators: 100,
            gamma: 0.0,
            max_depth: 6,
            subsample: 1.0,
            colsample_bytree: 1.0,
            lambda: 1.0,
            eta: 0.1,
            base_score: None,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |msg: String| Err(GbdtError::BadParam(msg));
        if self.n_estimators == 0 {
            return bad("n_estimators must be positive".into());
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must be in (0,1], got {}", self.subsample));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad(format!(
                "colsample_bytree must be in (0,1], got {}",
                self.colsample_bytree
            ));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must be in (0,1], got {}", self.eta));
        }
        if let Some(b) = self.base_score {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("base_score must be in (0,1), got {b}"));
            }
        }
        Ok(())
    }
}

/// Search space for `grid_search_cv`. Defaults follow the five tuned
/// parameters; eta stays fixed and is inherited from the base params.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_estimators: Vec<usize>,
    pub gamma: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub subsample: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_estimators: vec![100, 300, 500],
            gamma: vec![0.0, 1.0, 5.0],
            max_depth: vec![3, 6, 9],
            subsample: vec![0.7, 1.0],
            colsample_bytree: vec![0.7, 1.0],
        }
    }
}

impl GridSpec {
    /// Enumerate grid points in a fixed nesting order (n_estimators
    /// outermost, colsample innermost); "grid order" in tie-breaking refers
    /// to this order.
    pub fn points(&self, base: &TrainParams) -> Vec<TrainParams> {
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &g in &self.gamma {
                for &d in &self.max_depth {
                    for &s in &self.subsample {
                        for &c in &self.colsample_bytree {
                            out.push(TrainParams {
                                n_estimators: n,
                                gamma: g,
                                max_depth: d,
                                subsample: s,
                                colsample_bytree: c,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.n_estimators.is_empty()
            || self.gamma.is_empty()
            || self.max_depth.is_empty()
            || self.subsample.is_empty()
            || self.colsample_bytree.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_validate() {
        TrainParams::default().validate().unwrap();
    }

    #[test]
    fn bad_subsample_rejected() {
        let p = TrainParams {
            subsample: 0.0,
            ..TrainParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn default_grid_has_108_points() {
        let pts = GridSpec::default().points(&TrainParams::default());
        assert_eq!(pts.len(), 3 * 3 * 3 * 2 * 2);
        // first point is the smallest n_estimators
        assert_eq!(pts[0].n_estimators, 100);
        assert_eq!(pts.last().unwrap().n_estimators, 500);
    }
}
