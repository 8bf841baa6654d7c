//! Parallel vs sequential bootstrap resampling on a realistic validation-set
//! size. Both paths share the per-resample RNG streams, so they produce the
//! same interval; the bench only compares wall time.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.gen_bool(0.09);
        let s: f64 = if y {
            rng.gen_range(0.2..1.0)
        } else {
            rng.gen_range(0.0..0.8)
        };
        scores.push(s);
        labels.push(y);
    }
    (scores, labels)
}

fn bench_bootstrap(c: &mut Criterion) {
    let (scores, labels) = synthetic_scores(15_000, 7);
    let mut group = c.benchmark_group("bootstrap_auroc_b200");
    group.sample_size(10);

    group.bench_function(BenchmarkId::new("parallel", "default"), |bench| {
        bench.iter(|| {
            periop_eval::bootstrap_ci(
                |s, y| periop_eval::auroc(s, y).ok(),
                &scores,
                &labels,
                200,
                11,
            )
            .unwrap()
        })
    });

    // Sequential comparison: same resample streams, plain loop.
    group.bench_function(BenchmarkId::new("sequential", "loop"), |bench| {
        bench.iter(|| {
            let n = scores.len();
            let mut vals = Vec::with_capacity(200);
            for b in 0..200u64 {
                let mut rng = periop_eval::resample_rng(11, b);
                let mut s = Vec::with_capacity(n);
                let mut y = Vec::with_capacity(n);
                for _ in 0..n {
                    let k = rng.gen_range(0..n);
                    s.push(scores[k]);
                    y.push(labels[k]);
                }
                if let Ok(v) = periop_eval::auroc(&s, &y) {
                    vals.push(v);
                }
            }
            vals.sort_by(|a, b| a.total_cmp(b));
            (vals[4], vals[194])
        })
    });

    group.finish();
}

criterion_group!(benches, bench_bootstrap);
criterion_main!(benches);
