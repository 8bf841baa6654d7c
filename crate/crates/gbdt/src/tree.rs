//! Regression tree arena. Node 0 is the root; internal nodes carry the
//! split, its recorded gain, and the training cover (sum of hessians).

use serde::{Deserialize, Serialize};

use crate::error::GbdtError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        feature_index: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
        cover: f64,
        gain: f64,
    },
    Leaf {
        weight: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Internal { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(weight: f64, cover: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { weight, cover }],
        }
    }

    /// Route one row to its leaf. Missing values (NaN) follow the node's
    /// default direction; present values go left iff `value < threshold`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Internal {
                    feature_index,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = x[feature_index];
                    i = if v.is_nan() {
                        if default_left {
                            left
                        } else {
                            right
                        }
                    } else if v < threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn leaf_weight(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { weight, .. } => weight,
            Node::Internal { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    /// Same routing as [`Tree::leaf_weight`] but reading values straight
    /// from a column-major matrix row (no row copy).
    pub fn leaf_weight_matrix(&self, x: &crate::matrix::FeatureMatrix, row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight, .. } => return weight,
                Node::Internal {
                    feature_index,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = x.value(row, feature_index);
                    i = if v.is_nan() {
                        if default_left {
                            left
                        } else {
                            right
                        }
                    } else if v < threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Structural checks used after deserialization: child links in range,
    /// every node reachable exactly once from the root, covers positive and
    /// additive within floating-point tolerance.
    pub fn validate(&self) -> Result<(), GbdtError> {
        if self.nodes.is_empty() {
            return Err(GbdtError::MalformedModel("tree with zero nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() {
                return Err(GbdtError::MalformedModel(format!(
                    "child index {i} out of range"
                )));
            }
            if seen[i] {
                return Err(GbdtError::MalformedModel(format!(
                    "node {i} reachable twice"
                )));
            }
            seen[i] = true;
            if let Node::Internal {
                left, right, cover, ..
            } = self.nodes[i]
            {
                let child_sum = self.nodes[left].cover() + self.nodes[right].cover();
                if !(cover > 0.0) {
                    return Err(GbdtError::MalformedModel(format!(
                        "non-positive cover at node {i}"
                    )));
                }
                if (child_sum - cover).abs() > 1e-6 * cover.max(1.0) {
                    return Err(GbdtError::MalformedModel(format!(
                        "cover not additive at node {i}: {cover} vs {child_sum}"
                    )));
                }
                stack.push(left);
                stack.push(right);
            }
        }
        if let Some(orphan) = seen.iter().position(|&s| !s) {
            return Err(GbdtError::MalformedModel(format!(
                "node {orphan} unreachable from root"
            )));
        }
        Ok(())
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => {
                    1 + depth(nodes, left).max(depth(nodes, right))
                }
            }
        }
        depth(&self.nodes, 0)
    }
}
