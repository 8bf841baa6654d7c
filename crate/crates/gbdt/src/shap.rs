//! Path-dependent TreeSHAP.
//!
//! Conditional expectations are taken per tree using the train-time cover
//! (hessian sum) proportions of each child, so no background dataset is
//! needed. Attributions are in margin (log-odds) units; local accuracy
//! `phi0 + sum(phi) = margin(x)` is exact there and only there.

use crate::error::GbdtError;
use crate::model::BoostedEnsemble;
use crate::tree::{Node, Tree};

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// One entry per feature, margin units, eta already applied.
    pub phi: Vec<f64>,
    /// Expected margin over the training distribution as encoded by covers.
    pub phi0: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElem {
    /// Feature index of the split that put this element on the path
    /// (-1 for the root placeholder).
    d: i32,
    /// Fraction of training paths (by cover) that flow through when the
    /// feature is *not* in the active subset.
    z: f64,
    /// 1 if following x's branch, 0 otherwise.
    o: f64,
    /// Permutation weight.
    w: f64,
}

fn extend(path: &mut [PathElem], len: &mut usize, pz: f64, po: f64, pi: i32) {
    let l = *len;
    path[l] = PathElem {
        d: pi,
        z: pz,
        o: po,
        w: if l == 0 { 1.0 } else { 0.0 },
    };
    let lp1 = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].w += po * path[i].w * (i + 1) as f64 / lp1;
        path[i].w = pz * path[i].w * (l - i) as f64 / lp1;
    }
    *len = l + 1;
}

fn unwind(path: &mut [PathElem], len: &mut usize, idx: usize) {
    let ud = *len - 1;
    let o = path[idx].o;
    let z = path[idx].z;
    let mut carry = path[ud].w;
    for j in (0..ud).rev() {
        if o != 0.0 {
            let tmp = path[j].w;
            path[j].w = carry * (ud + 1) as f64 / ((j + 1) as f64 * o);
            carry = tmp - path[j].w * z * (ud - j) as f64 / (ud + 1) as f64;
        } else {
            path[j].w = path[j].w * (ud + 1) as f64 / (z * (ud - j) as f64);
        }
    }
    for j in idx..ud {
        path[j].d = path[j + 1].d;
        path[j].z = path[j + 1].z;
        path[j].o = path[j + 1].o;
    }
    *len = ud;
}

/// Sum of permutation weights with element `idx` unwound, without
/// modifying the path.
fn unwound_sum(path: &[PathElem], len: usize, idx: usize) -> f64 {
    let ud = len - 1;
    let o = path[idx].o;
    let z = path[idx].z;
    let mut total = 0.0;
    if o != 0.0 {
        let mut carry = path[ud].w;
        for j in (0..ud).rev() {
            let tmp = carry * (ud + 1) as f64 / ((j + 1) as f64 * o);
            total += tmp;
            carry = path[j].w - tmp * z * (ud - j) as f64 / (ud + 1) as f64;
        }
    } else {
        for j in (0..ud).rev() {
            total += path[j].w * (ud + 1) as f64 / (z * (ud - j) as f64);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    x: &[f64],
    phi: &mut [f64],
    buf: &mut [PathElem],
    node: usize,
    parent_off: usize,
    parent_len: usize,
    pz: f64,
    po: f64,
    pi: i32,
) {
    let off = parent_off + parent_len;
    buf.copy_within(parent_off..parent_off + parent_len, off);
    let mut len = parent_len;
    {
        let path = &mut buf[off..];
        extend(path, &mut len, pz, po, pi);
    }
    match tree.nodes[node] {
        Node::Leaf { weight, .. } => {
            let path = &buf[off..off + len];
            for i in 1..len {
                let w = unwound_sum(path, len, i);
                phi[path[i].d as usize] += w * (path[i].o - path[i].z) * weight;
            }
        }
        Node::Internal {
            feature_index,
            threshold,
            default_left,
            left,
            right,
            cover,
            ..
        } => {
            let v = x[feature_index];
            let go_left = if v.is_nan() {
                default_left
            } else {
                v < threshold
            };
            let (hot, cold) = if go_left { (left, right) } else { (right, left) };
            let hot_z = tree.nodes[hot].cover() / cover;
            let cold_z = tree.nodes[cold].cover() / cover;

            let mut iz = 1.0;
            let mut io = 1.0;
            let found = {
                let path = &buf[off..off + len];
                (0..len).find(|&k| path[k].d == feature_index as i32)
            };
            if let Some(k) = found {
                let path = &mut buf[off..];
                iz = path[k].z;
                io = path[k].o;
                unwind(path, &mut len, k);
            }
            let fi = feature_index as i32;
            recurse(tree, x, phi, buf, hot, off, len, hot_z * iz, io, fi);
            recurse(tree, x, phi, buf, cold, off, len, cold_z * iz, 0.0, fi);
        }
    }
}

fn check_covers(ens: &BoostedEnsemble) -> Result<(), GbdtError> {
    for tree in &ens.trees {
        for node in &tree.nodes {
            if let Node::Internal { cover, .. } = node {
                if !(*cover > 0.0) {
                    return Err(GbdtError::MissingCovers);
                }
            }
        }
    }
    Ok(())
}

/// Cover-weighted mean leaf value of one tree (its expected output).
fn tree_mean(tree: &Tree) -> Result<f64, GbdtError> {
    let root_cover = tree.nodes[0].cover();
    if tree.nodes.len() == 1 {
        // single leaf: expectation is its weight regardless of cover
        if let Node::Leaf { weight, .. } = tree.nodes[0] {
            return Ok(weight);
        }
    }
    if !(root_cover > 0.0) {
        return Err(GbdtError::MissingCovers);
    }
    let mut acc = 0.0;
    for node in &tree.nodes {
        if let Node::Leaf { weight, cover } = node {
            acc += weight * cover;
        }
    }
    Ok(acc / root_cover)
}

pub fn shap_values(ens: &BoostedEnsemble, x: &[f64]) -> Result<Attribution, GbdtError> {
    let m = ens.feature_names.len();
    if x.len() != m {
        return Err(GbdtError::ColumnMismatch {
            expected: m,
            got: x.len(),
        });
    }
    check_covers(ens)?;
    let mut phi = vec![0.0f64; m];
    let mut expected = 0.0;
    let mut buf: Vec<PathElem> = Vec::new();
    for tree in &ens.trees {
        let d = tree.max_depth();
        let cap = (d + 2) * (d + 3) / 2 + d + 2;
        if buf.len() < cap {
            buf.resize(cap, PathElem::default());
        }
        recurse(tree, x, &mut phi, &mut buf, 0, 0, 0, 1.0, 1.0, -1);
        expected += tree_mean(tree)?;
    }
    for p in &mut phi {
        *p *= ens.params.eta;
    }
    Ok(Attribution {
        phi,
        phi0: ens.base_margin + ens.params.eta * expected,
    })
}

/// Exponential-time reference: exact Shapley values by enumerating all
/// feature subsets with cover-weighted conditional expectations. Refuses
/// more than 20 features. This is the oracle the fast path is tested
/// against; it is also part of the public API so downstream tests can use
/// it.
pub fn brute_force_shap(ens: &BoostedEnsemble, x: &[f64]) -> Result<Vec<f64>, GbdtError> {
    let m = ens.feature_names.len();
    if x.len() != m {
        return Err(GbdtError::ColumnMismatch {
            expected: m,
            got: x.len(),
        });
    }
    if m > 20 {
        return Err(GbdtError::BadParam(format!(
            "brute-force Shapley is exponential; refusing {m} features"
        )));
    }
    check_covers(ens)?;

    fn cond_exp(tree: &Tree, node: usize, x: &[f64], mask: u32) -> f64 {
        match tree.nodes[node] {
            Node::Leaf { weight, .. } => weight,
            Node::Internal {
                feature_index,
                threshold,
                default_left,
                left,
                right,
                cover,
                ..
            } => {
                if mask & (1 << feature_index) != 0 {
                    let v = x[feature_index];
                    let go_left = if v.is_nan() {
                        default_left
                    } else {
                        v < threshold
                    };
                    cond_exp(tree, if go_left { left } else { right }, x, mask)
                } else {
                    let cl = tree.nodes[left].cover();
                    let cr = tree.nodes[right].cover();
                    (cl * cond_exp(tree, left, x, mask) + cr * cond_exp(tree, right, x, mask))
                        / cover
                }
            }
        }
    }

    let value = |mask: u32| -> f64 {
        let mut v = 0.0;
        for tree in &ens.trees {
            v += cond_exp(tree, 0, x, mask);
        }
        ens.base_margin + ens.params.eta * v
    };

    let mut fact = vec![1.0f64; m + 1];
    for i in 1..=m {
        fact[i] = fact[i - 1] * i as f64;
    }
    // cache v(S) over all subsets
    let vals: Vec<f64> = (0..(1u32 << m)).map(value).collect();
    let mut phi = vec![0.0f64; m];
    for (j, p) in phi.iter_mut().enumerate() {
        for mask in 0..(1u32 << m) {
            if mask & (1 << j) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[m - s - 1] / fact[m];
            *p += w * (vals[(mask | (1 << j)) as usize] - vals[mask as usize]);
        }
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::FeatureMatrix;
    use crate::params::TrainParams;
    use crate::train::train;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("f{j}")).collect()
    }

    /// Random small ensemble built by actually training on random data, so
    /// covers are genuine.
    fn random_ensemble(seed: u64, m: usize, depth: usize) -> (BoostedEnsemble, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40 + (seed as usize % 60);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        if rng.gen_bool(0.15) {
                            f64::NAN
                        } else {
                            (rng.gen_range(-8i32..8) as f64) * 0.5
                        }
                    })
                    .collect()
            })
            .collect();
        let y: Vec<bool> = rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().filter(|v| !v.is_nan()).sum();
                s + rng.gen_range(-2.0..2.0) > 0.0
            })
            .collect();
        let x = FeatureMatrix::from_rows(names(m), &rows).unwrap();
        let params = TrainParams {
            n_estimators: 3,
            max_depth: depth,
            seed,
            ..TrainParams::default()
        };
        let model = train(&x, &y, &params).unwrap_or_else(|_| BoostedEnsemble {
            params,
            base_margin: 0.0,
            feature_names: names(m),
            trees: vec![],
        });
        (model, rows)
    }

    #[test]
    fn local_accuracy_and_brute_force_agreement() {
        let mut worst_brute = 0.0f64;
        let mut worst_local = 0.0f64;
        let mut checked = 0;
        for seed in 0..40u64 {
            let m = 2 + (seed as usize % 7); // up to 8 features
            let (model, rows) = random_ensemble(seed, m, 3);
            for row in rows.iter().take(5) {
                let attr = shap_values(&model, row).unwrap();
                let brute = brute_force_shap(&model, row).unwrap();
                for j in 0..m {
                    worst_brute = worst_brute.max((attr.phi[j] - brute[j]).abs());
                }
                let margin = model.predict_margin_row(row);
                let total: f64 = attr.phi0 + attr.phi.iter().sum::<f64>();
                worst_local = worst_local.max((total - margin).abs());
                checked += 1;
            }
        }
        assert!(checked > 100);
        assert!(worst_brute < 1e-9, "brute-force gap {worst_brute}");
        assert!(worst_local < 1e-9, "local accuracy gap {worst_local}");
    }

    #[test]
    fn single_leaf_trees_attribute_nothing() {
        let (mut model, rows) = random_ensemble(3, 4, 3);
        for t in &mut model.trees {
            *t = Tree::single_leaf(0.25, 10.0);
        }
        let attr = shap_values(&model, &rows[0]).unwrap();
        assert!(attr.phi.iter().all(|&p| p == 0.0));
        assert_eq!(attr.phi0, model.predict_margin_row(&rows[0]));
    }

    #[test]
    fn depth_one_attributes_only_split_feature() {
        // hand-built stump on feature 1
        let tree = Tree {
            nodes: vec![
                Node::Internal {
                    feature_index: 1,
                    threshold: 0.0,
                    default_left: true,
                    left: 1,
                    right: 2,
                    cover: 8.0,
                    gain: 1.0,
                },
                Node::Leaf {
                    weight: -0.5,
                    cover: 3.0,
                },
                Node::Leaf {
                    weight: 0.75,
                    cover: 5.0,
                },
            ],
        };
        let model = BoostedEnsemble {
            params: TrainParams {
                eta: 0.3,
                ..TrainParams::default()
            },
            base_margin: -1.0,
            feature_names: names(3),
            trees: vec![tree],
        };
        let x = vec![9.0, 2.0, -4.0];
        let attr = shap_values(&model, &x).unwrap();
        assert_eq!(attr.phi[0], 0.0);
        assert_eq!(attr.phi[2], 0.0);
        let margin = model.predict_margin_row(&x);
        assert!((attr.phi[1] - (margin - attr.phi0)).abs() < 1e-12);
    }

    #[test]
    fn null_player_has_zero_phi() {
        // feature 2 never used by any tree (constant column)
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|i| vec![i as f64, (i % 7) as f64, 1.0])
            .collect();
        let y: Vec<bool> = (0..80).map(|i| i % 2 == 0).collect();
        let x = FeatureMatrix::from_rows(names(3), &rows).unwrap();
        let model = train(
            &x,
            &y,
            &TrainParams {
                n_estimators: 10,
                max_depth: 3,
                ..TrainParams::default()
            },
        )
        .unwrap();
        for row in rows.iter().take(10) {
            let attr = shap_values(&model, row).unwrap();
            assert_eq!(attr.phi[2], 0.0);
        }
    }

    #[test]
    fn missing_covers_rejected() {
        let tree = Tree {
            nodes: vec![
                Node::Internal {
                    feature_index: 0,
                    threshold: 0.0,
                    default_left: true,
                    left: 1,
                    right: 2,
                    cover: 0.0,
                    gain: 1.0,
                },
                Node::Leaf {
                    weight: 1.0,
                    cover: 0.0,
                },
                Node::Leaf {
                    weight: -1.0,
                    cover: 0.0,
                },
            ],
        };
        let model = BoostedEnsemble {
            params: TrainParams::default(),
            base_margin: 0.0,
            feature_names: names(1),
            trees: vec![tree],
        };
        let err = shap_values(&model, &[1.0]).unwrap_err();
        assert_eq!(err.to_string(), "train-time covers required");
    }

    #[test]
    fn twin_features_get_equal_importance() {
        // two identical columns: tie rule always picks the lower index for
        // splits, but path-dependent SHAP sees the same conditional
        // structure; mean |phi| must match between twins when both are
        // actually used. Build symmetric usage by hand: one stump on each.
        let stump = |f: usize| Tree {
            nodes: vec![
                Node::Internal {
                    feature_index: f,
                    threshold: 0.5,
                    default_left: true,
                    left: 1,
                    right: 2,
                    cover: 10.0,
                    gain: 1.0,
                },
                Node::Leaf {
                    weight: -1.0,
                    cover: 5.0,
                },
                Node::Leaf {
                    weight: 1.0,
                    cover: 5.0,
                },
            ],
        };
        let model = BoostedEnsemble {
            params: TrainParams::default(),
            base_margin: 0.0,
            feature_names: names(2),
            trees: vec![stump(0), stump(1)],
        };
        let xs = [vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        for x in &xs {
            let attr = shap_values(&model, x).unwrap();
            let brute = brute_force_shap(&model, x).unwrap();
            for j in 0..2 {
                assert!((attr.phi[j] - brute[j]).abs() < 1e-12);
            }
        }
        // identical values -> symmetric attribution
        let attr = shap_values(&model, &xs[0]).unwrap();
        assert!((attr.phi[0] - attr.phi[1]).abs() < 1e-9);
    }
}
