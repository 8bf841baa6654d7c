//! Cohort comparison tests: Pearson chi-square for categorical variables,
//! Mann-Whitney U for continuous ones.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::EvalError;

/// Pearson chi-square test over a 2 x k contingency table of counts.
/// Returns the statistic and the survival-function p-value with
/// (rows-1)(cols-1) degrees of freedom.
pub fn chi_square_test(table: &[Vec<f64>]) -> Result<(f64, f64), EvalError> {
    let rows = table.len();
    let cols = table.first().map_or(0, |r| r.len());
    if rows != 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(EvalError::BadTableShape { rows, cols });
    }

    let row_totals: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let grand: f64 = row_totals.iter().sum();
    if row_totals.iter().any(|&t| t == 0.0) {
        return Err(EvalError::ZeroMargin("row"));
    }
    if col_totals.iter().any(|&t| t == 0.0) {
        return Err(EvalError::ZeroMargin("column"));
    }

    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = row_totals[i] * col_totals[j] / grand;
            statistic += (observed - expected).powi(2) / expected;
        }
    }

    let df = ((rows - 1) * (cols - 1)) as f64;
    let dist = ChiSquared::new(df).expect("df >= 1");
    let p = dist.sf(statistic).clamp(0.0, 1.0);
    Ok((statistic, p))
}

/// Mann-Whitney U with midranks for ties. Returns U for the first sample
/// and the two-sided p-value from the normal approximation with
/// tie-corrected variance and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64), EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptyInput("Mann-Whitney sample"));
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let n = n1 + n2;

    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_a = 0.0_f64;
    let mut tie_term = 0.0_f64; // sum of t^3 - t over tied blocks
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        let midrank = (i + 1 + j) as f64 / 2.0;
        let a_in_block = pooled[i..j].iter().filter(|&&(_, is_a)| is_a).count() as f64;
        rank_sum_a += midrank * a_in_block;
        if t > 1.0 {
            tie_term += t.powi(3) - t;
        }
        i = j;
    }

    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));

    let p = if variance <= 0.0 {
        1.0 // all observations identical
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * normal.sf(z)).clamp(0.0, 1.0)
    };
    Ok((u, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_homogeneous_table() {
        let (stat, p) = chi_square_test(&[vec![10.0, 10.0], vec![10.0, 10.0]]).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn chi_square_hand_example() {
        // E = 15 in every cell, statistic = 4 * 25/15
        let (stat, p) = chi_square_test(&[vec![20.0, 10.0], vec![10.0, 20.0]]).unwrap();
        assert!((stat - 4.0 * 25.0 / 15.0).abs() < 1e-12);
        assert!((p - 0.0098).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn chi_square_scaling_identity() {
        let (s1, _) = chi_square_test(&[vec![20.0, 10.0], vec![10.0, 20.0]]).unwrap();
        let (s2, _) = chi_square_test(&[vec![40.0, 20.0], vec![20.0, 40.0]]).unwrap();
        assert!((s2 - 2.0 * s1).abs() < 1e-9);
    }

    #[test]
    fn chi_square_zero_margin_errors() {
        assert!(chi_square_test(&[vec![0.0, 0.0], vec![10.0, 20.0]]).is_err());
        assert!(chi_square_test(&[vec![0.0, 10.0], vec![0.0, 20.0]]).is_err());
    }

    #[test]
    fn mwu_identical_samples() {
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 3.0];
        let (u, p) = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(u, 4.5); // |a||b|/2
        assert!((p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mwu_complete_separation() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let (u, _) = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn mwu_large_shift_significant() {
        // deterministic interleaved values, b shifted well away from a
        let a: Vec<f64> = (0..200).map(|i| (i % 37) as f64 * 0.1).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        let (_, p) = mann_whitney_u(&a, &b).unwrap();
        assert!(p < 0.001, "p = {p}");
    }
}
