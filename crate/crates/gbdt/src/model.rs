//! Trained ensemble: prediction and JSON serialization.

use serde::{Deserialize, Serialize};

use crate::error::GbdtError;
use crate::matrix::FeatureMatrix;
use crate::params::TrainParams;
use crate::tree::Tree;

#[inline]
pub fn sigmoid(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

/// Ordered list of trees plus the constant margin. Leaf weights are stored
/// unscaled; the learning rate is applied at prediction time:
/// `margin(x) = base_margin + eta * sum_t leaf_weight_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostedEnsemble {
    pub params: TrainParams,
    pub base_margin: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl BoostedEnsemble {
    fn check_matrix(&self, x: &FeatureMatrix) -> Result<(), GbdtError> {
        if x.n_features() != self.feature_names.len() {
            return Err(GbdtError::ColumnMismatch {
                expected: self.feature_names.len(),
                got: x.n_features(),
            });
        }
        for (i, (a, b)) in self
            .feature_names
            .iter()
            .zip(x.feature_names().iter())
            .enumerate()
        {
            if a != b {
                return Err(GbdtError::FeatureNameMismatch(i));
            }
        }
        Ok(())
    }

    pub fn predict_margin_row(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for t in &self.trees {
            sum += t.leaf_weight(x);
        }
        self.base_margin + self.params.eta * sum
    }

    pub fn predict_margin(&self, x: &FeatureMatrix) -> Result<Vec<f64>, GbdtError> {
        self.check_matrix(x)?;
        Ok(periop_par::map_indices(x.n_rows(), |i| {
            let mut sum = 0.0;
            for t in &self.trees {
                sum += t.leaf_weight_matrix(x, i);
            }
            self.base_margin + self.params.eta * sum
        }))
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>, GbdtError> {
        Ok(self.predict_margin(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn to_json(&self) -> Result<String, GbdtError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, GbdtError> {
        let model: BoostedEnsemble = serde_json::from_str(s)?;
        model.params.validate()?;
        for tree in &model.trees {
            tree.validate()?;
            for node in &tree.nodes {
                if let crate::tree::Node::Internal { feature_index, .. } = node {
                    if *feature_index >= model.feature_names.len() {
                        return Err(GbdtError::MalformedModel(format!(
                            "feature index {feature_index} out of range"
                        )));
                    }
                }
            }
        }
        Ok(model)
    }
}
