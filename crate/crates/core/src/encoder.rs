//! Smoothed log-odds target encoding for categorical features.
//!
//! Fitted strictly on training-fold rows. Each observed level ℓ of a
//! categorical feature encodes to ln((P_ℓ+α)/(N_ℓ+α)) where P_ℓ/N_ℓ count
//! positive/negative training rows at that level; absent values count under
//! the reserved level `"Missing"`. Levels never seen in the fold fall back
//! to the fold-wide prior ln((P+α)/(N+α)).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::features::{FeatureKind, FeatureSpecList, FeatureValue, FeatureVector};

pub const MISSING_LEVEL: &str = "Missing";
pub const DEFAULT_SMOOTHING_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderModel {
    /// categorical feature name → level → encoded value
    pub features: BTreeMap<String, BTreeMap<String, f64>>,
    pub prior_log_odds: f64,
    pub smoothing_alpha: f64,
    /// Fingerprint of the exact (encounter_id, label) pairs the encoder was
    /// fitted on; lets downstream artifacts prove which rows trained it.
    pub fitted_on: String,
}

/// FNV-1a over the sorted (encounter_id, label) pairs.
fn fit_fingerprint(vectors: &[FeatureVector], labels: &[bool]) -> String {
    let mut pairs: Vec<(&str, bool)> = vectors
        .iter()
        .zip(labels)
        .map(|(v, &y)| (v.encounter_id.as_str(), y))
        .collect();
    pairs.sort();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
    };
    for (id, y) in pairs {
        eat(id.as_bytes());
        eat(if y { b"=1;" } else { b"=0;" });
    }
    format!("fnv1a:{hash:016x}")
}

fn level_of(value: &FeatureValue) -> Option<String> {
    match value {
        FeatureValue::Categorical(s) => Some(s.clone()),
        FeatureValue::Missing => Some(MISSING_LEVEL.to_string()),
        // a numeric value in a categorical slot is a shape bug upstream;
        // treat it as missing rather than poisoning the level map
        FeatureValue::Numeric(_) => {
            debug_assert!(false, "numeric value in categorical feature");
            Some(MISSING_LEVEL.to_string())
        }
    }
}

/// Fit the encoder on one training fold. Errors on an empty fold, mismatched
/// lengths, or a non-positive smoothing constant.
pub fn fit_encoder(
    vectors: &[FeatureVector],
    labels: &[bool],
    spec: &FeatureSpecList,
    alpha: f64,
) -> Result<EncoderModel, CoreError> {
    if vectors.is_empty() {
        return Err(CoreError::EmptyFold);
    }
    if vectors.len() != labels.len() {
        return Err(CoreError::Config(format!(
            "encoder: {} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if !(alpha > 0.0) {
        return Err(CoreError::Config(format!("smoothing alpha must be positive, got {alpha}")));
    }

    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = labels.len() as f64 - pos;
    let prior_log_odds = ((pos + alpha) / (neg + alpha)).ln();

    let mut features: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for fspec in spec.iter().filter(|s| s.kind == FeatureKind::Categorical) {
        let mut counts: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for (vector, &y) in vectors.iter().zip(labels) {
            let value = vector.values.get(&fspec.name).unwrap_or(&FeatureValue::Missing);
            if let Some(level) = level_of(value) {
                let entry = counts.entry(level).or_insert((0.0, 0.0));
                if y {
                    entry.0 += 1.0;
                } else {
                    entry.1 += 1.0;
                }
            }
        }
        let encoded: BTreeMap<String, f64> = counts
            .into_iter()
            .map(|(level, (p, n))| (level, ((p + alpha) / (n + alpha)).ln()))
            .collect();
        features.insert(fspec.name.clone(), encoded);
    }

    Ok(EncoderModel {
        features,
        prior_log_odds,
        smoothing_alpha: alpha,
        fitted_on: fit_fingerprint(vectors, labels),
    })
}

/// Encode one raw vector into the dense row expected by the model, aligned
/// with the feature-spec order. Missing numerics become NaN so the trees'
/// native missing routing applies.
pub fn encode(vector: &FeatureVector, model: &EncoderModel, spec: &FeatureSpecList) -> Vec<f64> {
    spec.iter()
        .map(|fspec| {
            let value = vector.values.get(&fspec.name).unwrap_or(&FeatureValue::Missing);
            match fspec.kind {
                FeatureKind::Numeric | FeatureKind::Binary => match value {
                    FeatureValue::Numeric(x) => *x,
                    _ => f64::NAN,
                },
                FeatureKind::Categorical => {
                    let levels = model.features.get(&fspec.name);
                    let level = match value {
                        FeatureValue::Categorical(s) => s.as_str(),
                        _ => MISSING_LEVEL,
                    };
                    levels
                        .and_then(|m| m.get(level))
                        .copied()
                        .unwrap_or(model.prior_log_odds)
                }
            }
        })
        .collect()
}

/// Encode a whole fold into dense rows.
pub fn encode_matrix(
    vectors: &[FeatureVector],
    model: &EncoderModel,
    spec: &FeatureSpecList,
) -> Vec<Vec<f64>> {
    periop_par::map_slice(vectors, |v| encode(v, model, spec))
}

impl EncoderModel {
    pub fn to_json(&self) -> Result<String, CoreError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, CoreError> {
        Ok(serde_json::from_str(s)?)
    }
}
