//! Column-major feature matrix. `NaN` marks a missing value and is routed
//! natively by the trees rather than imputed.

use crate::error::GbdtError;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    feature_names: Vec<String>,
    n_rows: usize,
    /// Flat column-major storage: column `j` occupies
    /// `values[j*n_rows .. (j+1)*n_rows]`.
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_columns(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self, GbdtError> {
        if feature_names.len() != columns.len() {
            return Err(GbdtError::ShapeMismatch(format!(
                "{} names but {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(GbdtError::ShapeMismatch(format!(
                    "column {} has {} rows, expected {}",
                    feature_names[j],
                    col.len(),
                    n_rows
                )));
            }
        }
        let mut values = Vec::with_capacity(n_rows * columns.len());
        for col in &columns {
            values.extend_from_slice(col);
        }
        Ok(FeatureMatrix {
            feature_names,
            n_rows,
            values,
        })
    }

    /// Build from row-major data (convenience for tests and small inputs).
    pub fn from_rows(feature_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, GbdtError> {
        let m = feature_names.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(GbdtError::ShapeMismatch(format!(
                    "row {i} has {} values, expected {m}",
                    r.len()
                )));
            }
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); m];
        for r in rows {
            for (j, &v) in r.iter().enumerate() {
                columns[j].push(v);
            }
        }
        Self::from_columns(feature_names, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[col * self.n_rows + row]
    }

    /// Copy one row out (feature order). Used by per-row SHAP.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_features()).map(|j| self.value(i, j)).collect()
    }

    /// New matrix containing `rows` (in the given order). Used by CV folds.
    pub fn subset_rows(&self, rows: &[u32]) -> FeatureMatrix {
        let m = self.n_features();
        let mut values = Vec::with_capacity(rows.len() * m);
        for j in 0..m {
            let col = self.column(j);
            values.extend(rows.iter().map(|&r| col[r as usize]));
        }
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            n_rows: rows.len(),
            values,
        }
    }
}
