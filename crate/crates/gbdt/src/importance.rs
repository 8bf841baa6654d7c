//! Mean |SHAP| feature importance: the Figure 3/4 analog as CSV and as a
//! horizontal top-10 bar chart in SVG.

use serde::{Deserialize, Serialize};

use crate::error::GbdtError;
use crate::matrix::FeatureMatrix;
use crate::model::BoostedEnsemble;
use crate::shap::shap_values;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceEntry {
    pub feature: String,
    pub mean_abs_shap: f64,
}

/// Sorted non-increasing by `mean_abs_shap`; ties keep feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceReport {
    pub evaluated_on: String,
    pub n_rows: usize,
    pub entries: Vec<ImportanceEntry>,
}

pub fn mean_abs_shap(
    ens: &BoostedEnsemble,
    x: &FeatureMatrix,
    evaluated_on: &str,
) -> Result<ImportanceReport, GbdtError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(GbdtError::EmptyInput(
            "importance requires at least one row".into(),
        ));
    }
    let m = ens.feature_names.len();
    let per_row: Vec<Vec<f64>> = {
        let results: Vec<Result<Vec<f64>, GbdtError>> =
            periop_par::map_indices(n, |i| Ok(shap_values(ens, &x.row(i))?.phi));
        results.into_iter().collect::<Result<_, _>>()?
    };
    let mut sums = vec![0.0f64; m];
    for phi in &per_row {
        for (j, v) in phi.iter().enumerate() {
            sums[j] += v.abs();
        }
    }
    let mut entries: Vec<ImportanceEntry> = ens
        .feature_names
        .iter()
        .zip(sums.iter())
        .map(|(name, s)| ImportanceEntry {
            feature: name.clone(),
            mean_abs_shap: s / n as f64,
        })
        .collect();
    entries.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap));
    Ok(ImportanceReport {
        evaluated_on: evaluated_on.to_string(),
        n_rows: n,
        entries,
    })
}

impl ImportanceReport {
    pub fn top_k(&self, k: usize) -> &[ImportanceEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mean_abs_shap\n");
        for e in &self.entries {
            out.push_str(&format!("{},{}\n", e.feature, e.mean_abs_shap));
        }
        out
    }

    /// Horizontal bar chart of the top `k` features.
    pub fn to_svg(&self, k: usize, title: &str) -> String {
        let top = self.top_k(k);
        let bar_h = 28;
        let label_w = 300;
        let chart_w = 460;
        let width = label_w + chart_w + 40;
        let height = 60 + top.len() * bar_h;
        let max_val = top
            .first()
            .map(|e| e.mean_abs_shap)
            .filter(|v| *v > 0.0)
            .unwrap_or(1.0);
        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
             viewBox=\"0 0 {width} {height}\">\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"20\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" \
             font-weight=\"bold\">{}</text>\n",
            escape_xml(title)
        ));
        for (i, e) in top.iter().enumerate() {
            let y = 50 + i * bar_h;
            let w = (e.mean_abs_shap / max_val * chart_w as f64).round() as usize;
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
                 text-anchor=\"end\">{}</text>\n",
                label_w - 8,
                y + 18,
                escape_xml(&e.feature)
            ));
            svg.push_str(&format!(
                "  <rect x=\"{label_w}\" y=\"{}\" width=\"{w}\" height=\"{}\" \
                 fill=\"#4878a8\"/>\n",
                y + 4,
                bar_h - 8
            ));
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.4}</text>\n",
                label_w + w + 6,
                y + 18,
                e.mean_abs_shap
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
