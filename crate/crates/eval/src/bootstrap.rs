//! Percentile bootstrap confidence intervals.
//!
//! Resampling is at the encounter (row) level with replacement. Each
//! resample draws from its own counter-seeded RNG stream, so running the
//! resamples in parallel cannot change the interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::EvalError;

/// RNG stream for bootstrap resample `b` of a run seeded with `seed`.
pub fn resample_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

/// Linear-interpolation empirical quantile over a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
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

/// 95% percentile bootstrap interval for `metric` over `B` resamples.
///
/// `metric` returns `None` on resamples where it is undefined (e.g. a
/// single-class draw); such resamples are skipped and counted. More than
/// 50% skips is an error.
pub fn bootstrap_ci<F>(
    metric: F,
    scores: &[f64],
    labels: &[bool],
    b: usize,
    seed: u64,
) -> Result<(f64, f64), EvalError>
where
    F: Fn(&[f64], &[bool]) -> Option<f64> + Sync + Send,
{
    if b < 100 {
        return Err(EvalError::TooFewResamples(b));
    }
    let n = scores.len();
    if n == 0 {
        return Err(EvalError::EmptyInput("bootstrap over empty sample"));
    }

    let estimates: Vec<Option<f64>> = periop_par::map_indices(b, |i| {
        let mut rng = resample_rng(seed, i as u64);
        let mut s = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            s.push(scores[k]);
            y.push(labels[k]);
        }
        metric(&s, &y)
    });

    let mut kept: Vec<f64> = estimates.iter().filter_map(|e| *e).collect();
    let degenerate = b - kept.len();
    if degenerate * 2 > b {
        return Err(EvalError::InsufficientClassBalance {
            degenerate,
            total: b,
        });
    }
    kept.sort_by(|a, b| a.total_cmp(b));
    Ok((quantile_sorted(&kept, 0.025), quantile_sorted(&kept, 0.975)))
}
