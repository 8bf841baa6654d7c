//! Second-order (Newton) boosting with logistic loss.
//!
//! Split finding is exact greedy: candidate thresholds are midpoints of
//! consecutive distinct observed values at the node, each evaluated with
//! missing rows routed left and routed right. The frontier is grown level
//! by level over a single global presort, so cost per level is O(features
//! x rows). All tie-breaking is pinned (ascending feature index, ascending
//! threshold, missing-left first), and subsampling draws from per-tree
//! counter-based RNG streams, so a fixed seed yields a bit-identical model
//! regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::GbdtError;
use crate::matrix::FeatureMatrix;
use crate::model::{sigmoid, BoostedEnsemble};
use crate::params::TrainParams;
use crate::tree::{Node, Tree};

const SETTLED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct SplitCand {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

#[derive(Debug, Clone, Copy)]
struct FrontierNode {
    node_id: usize,
    g: f64,
    h: f64,
}

/// Gain contribution of one side: G^2/(H+lambda). `None` marks an
/// undefined ratio (zero denominator with non-zero gradient), which
/// disqualifies the candidate.
fn side_score(g: f64, h: f64, lambda: f64) -> Option<f64> {
    let denom = h + lambda;
    if denom > 0.0 {
        Some(g * g / denom)
    } else if g == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Closed-form Newton leaf solution `-G/(H+lambda)`; exposed so the
/// one-row hand-arithmetic example (g=-0.5, h=0.25, lambda=1 -> 0.4) is
/// checkable without going through `train`'s two-row/two-class
/// precondition.
pub fn newton_leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let denom = h + lambda;
    if denom > 0.0 {
        -g / denom
    } else {
        0.0
    }
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    newton_leaf_weight(g, h, lambda)
}

/// Draw `floor(rate*n)` (at least 1) distinct indices without replacement,
/// returned ascending. Deterministic in (seed, stream).
fn sample_indices(n: usize, rate: f64, seed: u64, stream: u64) -> Vec<u32> {
    let k = ((rate * n as f64).floor() as usize).clamp(1, n);
    if k == n {
        return (0..n as u32).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx: Vec<u32> = (0..n as u32).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

/// Best candidate per frontier slot for one feature. Two passes over the
/// presorted order: first to separate present from missing gradient sums,
/// then a prefix scan evaluating every midpoint in both routing directions.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    col: &[f64],
    sorted_rows: &[u32],
    row_slot: &[u32],
    g: &[f64],
    h: &[f64],
    frontier: &[FrontierNode],
    lambda: f64,
    gamma: f64,
) -> Vec<Option<SplitCand>> {
    let k = frontier.len();
    let mut pres_g = vec![0.0f64; k];
    let mut pres_h = vec![0.0f64; k];
    for &r in sorted_rows {
        let s = row_slot[r as usize];
        if s != SETTLED {
            pres_g[s as usize] += g[r as usize];
            pres_h[s as usize] += h[r as usize];
        }
    }
    let miss_g: Vec<f64> = (0..k).map(|s| frontier[s].g - pres_g[s]).collect();
    let miss_h: Vec<f64> = (0..k).map(|s| frontier[s].h - pres_h[s]).collect();

    let parent_score: Vec<Option<f64>> = frontier
        .iter()
        .map(|f| side_score(f.g, f.h, lambda))
        .collect();

    let mut prefix_g = vec![0.0f64; k];
    let mut prefix_h = vec![0.0f64; k];
    let mut prev_val = vec![f64::NAN; k];
    let mut seen = vec![false; k];
    let mut best: Vec<Option<SplitCand>> = vec![None; k];

    for &r in sorted_rows {
        let ri = r as usize;
        let s = row_slot[ri];
        if s == SETTLED {
            continue;
        }
        let s = s as usize;
        let v = col[ri];
        if seen[s] && v > prev_val[s] {
            let mid = prev_val[s] + (v - prev_val[s]) * 0.5;
            // Guard against the midpoint rounding onto an endpoint (adjacent
            // floats): routing by `< mid` must match the scanned partition.
            if mid > prev_val[s] && mid <= v {
                if let Some(parent) = parent_score[s] {
                    for default_left in [true, false] {
                        let (gl, hl) = if default_left {
                            (prefix_g[s] + miss_g[s], prefix_h[s] + miss_h[s])
                        } else {
                            (prefix_g[s], prefix_h[s])
                        };
                        let gr = frontier[s].g - gl;
                        let hr = frontier[s].h - hl;
                        let (Some(ls), Some(rs)) =
                            (side_score(gl, hl, lambda), side_score(gr, hr, lambda))
                        else {
                            continue;
                        };
                        let gain = 0.5 * (ls + rs - parent) - gamma;
                        let better = match best[s] {
                            None => gain > 0.0,
                            Some(b) => gain > b.gain,
                        };
                        if better {
                            best[s] = Some(SplitCand {
                                gain,
                                feature: usize::MAX, // filled by caller
                                threshold: mid,
                                default_left,
                            });
                        }
                    }
                }
            }
        }
        prefix_g[s] += g[ri];
        prefix_h[s] += h[ri];
        prev_val[s] = v;
        seen[s] = true;
    }
    best
}

fn build_tree(
    x: &FeatureMatrix,
    sorted: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    rows: &[u32],
    feats: &[usize],
    params: &TrainParams,
) -> Tree {
    let n = x.n_rows();
    let mut row_slot = vec![SETTLED; n];
    for &r in rows {
        row_slot[r as usize] = 0;
    }
    let mut g0 = 0.0;
    let mut h0 = 0.0;
    for &r in rows {
        g0 += g[r as usize];
        h0 += h[r as usize];
    }

    let mut nodes: Vec<Node> = vec![Node::Leaf {
        weight: 0.0,
        cover: 0.0,
    }];
    let mut frontier = vec![FrontierNode {
        node_id: 0,
        g: g0,
        h: h0,
    }];

    for _depth in 0..params.max_depth {
        if frontier.is_empty() {
            break;
        }
        // Feature-parallel scans; reduction walks features in ascending
        // order so the winning split is machine-independent.
        let per_feature: Vec<Vec<Option<SplitCand>>> = periop_par::map_slice(feats, |&j| {
            scan_feature(
                x.column(j),
                &sorted[j],
                &row_slot,
                g,
                h,
                &frontier,
                params.lambda,
                params.gamma,
            )
        });
        let mut best: Vec<Option<SplitCand>> = vec![None; frontier.len()];
        for (fi, cands) in per_feature.iter().enumerate() {
            let feature = feats[fi];
            for (s, cand) in cands.iter().enumerate() {
                if let Some(c) = cand {
                    let better = match best[s] {
                        None => c.gain > 0.0,
                        Some(b) => c.gain > b.gain,
                    };
                    if better {
                        best[s] = Some(SplitCand { feature, ..*c });
                    }
                }
            }
        }

        // Materialize splits and leaves for this level.
        struct Routing {
            feature: usize,
            threshold: f64,
            default_left: bool,
            left_slot: usize,
            right_slot: usize,
        }
        let mut routing: Vec<Option<Routing>> = Vec::with_capacity(frontier.len());
        let mut next: Vec<FrontierNode> = Vec::new();
        for (s, fr) in frontier.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let left_id = nodes.len();
                    nodes.push(Node::Leaf {
                        weight: 0.0,
                        cover: 0.0,
                    });
                    let right_id = nodes.len();
                    nodes.push(Node::Leaf {
                        weight: 0.0,
                        cover: 0.0,
                    });
                    nodes[fr.node_id] = Node::Internal {
                        feature_index: c.feature,
                        threshold: c.threshold,
                        default_left: c.default_left,
                        left: left_id,
                        right: right_id,
                        cover: fr.h,
                        gain: c.gain,
                    };
                    let left_slot = next.len();
                    next.push(FrontierNode {
                        node_id: left_id,
                        g: 0.0,
                        h: 0.0,
                    });
                    let right_slot = next.len();
                    next.push(FrontierNode {
                        node_id: right_id,
                        g: 0.0,
                        h: 0.0,
                    });
                    routing.push(Some(Routing {
                        feature: c.feature,
                        threshold: c.threshold,
                        default_left: c.default_left,
                        left_slot,
                        right_slot,
                    }));
                }
                None => {
                    nodes[fr.node_id] = Node::Leaf {
                        weight: leaf_weight(fr.g, fr.h, params.lambda),
                        cover: fr.h,
                    };
                    routing.push(None);
                }
            }
        }
        if next.is_empty() {
            frontier.clear();
            break;
        }
        // Route rows to the next level, accumulating child stats in
        // ascending row order.
        for &r in rows {
            let ri = r as usize;
            let s = row_slot[ri];
            if s == SETTLED {
                continue;
            }
            match &routing[s as usize] {
                None => row_slot[ri] = SETTLED,
                Some(rt) => {
                    let v = x.value(ri, rt.feature);
                    let go_left = if v.is_nan() {
                        rt.default_left
                    } else {
                        v < rt.threshold
                    };
                    let ns = if go_left { rt.left_slot } else { rt.right_slot };
                    row_slot[ri] = ns as u32;
                    next[ns].g += g[ri];
                    next[ns].h += h[ri];
                }
            }
        }
        frontier = next;
    }
    // Depth limit reached: remaining frontier becomes leaves.
    for fr in &frontier {
        nodes[fr.node_id] = Node::Leaf {
            weight: leaf_weight(fr.g, fr.h, params.lambda),
            cover: fr.h,
        };
    }

    // Recompute internal covers bottom-up so cover additivity is exact
    // (children are created after their parent, so reverse order works).
    for i in (0..nodes.len()).rev() {
        if let Node::Internal { left, right, .. } = nodes[i] {
            let sum = nodes[left].cover() + nodes[right].cover();
            if let Node::Internal { ref mut cover, .. } = nodes[i] {
                *cover = sum;
            }
        }
    }

    Tree { nodes }
}

/// Train and also return the training log-loss after each round (used by
/// the monotonicity property and for progress logging).
pub fn train_with_history(
    x: &FeatureMatrix,
    y: &[bool],
    params: &TrainParams,
) -> Result<(BoostedEnsemble, Vec<f64>), GbdtError> {
    params.validate()?;
    let n = x.n_rows();
    if n != y.len() {
        return Err(GbdtError::ShapeMismatch(format!(
            "{n} rows but {} labels",
            y.len()
        )));
    }
    if n < 2 {
        return Err(GbdtError::ShapeMismatch(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    let m = x.n_features();
    if m == 0 {
        return Err(GbdtError::NoFeatures);
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == n {
        return Err(GbdtError::SingleClass {
            n_pos,
            n_neg: n - n_pos,
        });
    }

    let base_score = match params.base_score {
        Some(b) => b,
        None => (n_pos as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6),
    };
    let base_margin = (base_score / (1.0 - base_score)).ln();

    // Global presort: per feature, present rows ascending by (value, row).
    let sorted: Vec<Vec<u32>> = periop_par::map_indices(m, |j| {
        let col = x.column(j);
        let mut idx: Vec<u32> = (0..n as u32).filter(|&r| !col[r as usize].is_nan()).collect();
        idx.sort_unstable_by(|&a, &b| {
            col[a as usize]
                .partial_cmp(&col[b as usize])
                .expect("values are non-NaN")
                .then(a.cmp(&b))
        });
        idx
    });

    let mut margins = vec![base_margin; n];
    let mut g = vec![0.0f64; n];
    let mut h = vec![0.0f64; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut history = Vec::with_capacity(params.n_estimators);

    for t in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            g[i] = p - if y[i] { 1.0 } else { 0.0 };
            h[i] = p * (1.0 - p);
        }
        let rows = sample_indices(n, params.subsample, params.seed, 2 * t as u64);
        let feat_idx = sample_indices(m, params.colsample_bytree, params.seed, 2 * t as u64 + 1);
        let feats: Vec<usize> = feat_idx.iter().map(|&j| j as usize).collect();

        let tree = build_tree(x, &sorted, &g, &h, &rows, &feats, params);

        let deltas: Vec<f64> = periop_par::map_indices(n, |i| tree.leaf_weight_matrix(x, i));
        for i in 0..n {
            margins[i] += params.eta * deltas[i];
        }
        trees.push(tree);
        history.push(log_loss(&margins, y));
    }

    let ensemble = BoostedEnsemble {
        params: params.clone(),
        base_margin,
        feature_names: x.feature_names().to_vec(),
        trees,
    };
    Ok((ensemble, history))
}

pub fn train(
    x: &FeatureMatrix,
    y: &[bool],
    params: &TrainParams,
) -> Result<BoostedEnsemble, GbdtError> {
    train_with_history(x, y, params).map(|(e, _)| e)
}

pub(crate) fn log_loss(margins: &[f64], y: &[bool]) -> f64 {
    let mut total = 0.0;
    for (i, &m) in margins.iter().enumerate() {
        let p = sigmoid(m).clamp(1e-15, 1.0 - 1e-15);
        total -= if y[i] { p.ln() } else { (1.0 - p).ln() };
    }
    total / margins.len() as f64
}
