use serde::{Deserialize, Serialize};

use super::histogram::{best_split, leaf_weight, NodeStats, SplitCandidate, SplitRules};
use crate::data::{BinMap, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Node {
    /// Rows with `x <= threshold` (equivalently bin `<= bin`) go left;
    /// missing values follow `default_left`.
    Split {
        feature: usize,
        bin: u16,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf { value: Vec<f64> },
}

/// A regression tree stored as a node array with the root at index 0.
///
/// `output` is `None` for trees whose leaves cover every model output and
/// `Some(k)` for single-output trees, whose leaves hold one value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    pub round: usize,
    pub output: Option<usize>,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf reached by row `row` of `x`.
    pub fn leaf_index(&self, x: &FeatureMatrix, row: usize) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, default_left, left, right, .. } => {
                    let go_left = match x.get(row, *feature) {
                        Some(v) => v <= *threshold,
                        None => *default_left,
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub(crate) fn leaf_index_binned(&self, bins: &BinMap, row: usize) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, bin, default_left, left, right, .. } => {
                    let b = bins.bin(row, *feature);
                    let go_left = if b == bins.missing_bin(*feature) { *default_left } else { b <= *bin };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_value(&self, index: usize) -> &[f64] {
        match &self.nodes[index] {
            Node::Leaf { value } => value,
            Node::Split { .. } => panic!("node {index} is not a leaf"),
        }
    }

    /// Checks structure: every node reachable exactly once from the root,
    /// leaf widths as given, finite leaves, features in range.
    pub(crate) fn validate(&self, n_features: usize, leaf_width: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() {
                return Err(format!("child index {i} out of range"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("node {i} reached twice"));
            }
            match &self.nodes[i] {
                Node::Leaf { value } => {
                    if value.len() != leaf_width {
                        return Err(format!("leaf {i} has {} values, expected {leaf_width}", value.len()));
                    }
                    if value.iter().any(|v| !v.is_finite()) {
                        return Err(format!("leaf {i} is not finite"));
                    }
                }
                Node::Split { feature, threshold, left, right, .. } => {
                    if *feature >= n_features {
                        return Err(format!("split on feature {feature} of {n_features}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("split {i} has a non-finite threshold"));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err("unreachable nodes".into());
        }
        Ok(())
    }
}

pub(crate) struct GrowParams {
    pub rules: SplitRules,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
}

struct Open {
    node: usize,
    rows: Vec<u32>,
    depth: usize,
    stats: NodeStats,
    split: Option<SplitCandidate>,
}

/// Grows one tree best-first: the open leaf with the largest gain is split
/// next, ties going to the earliest created leaf. Returns `None` when the
/// root itself cannot be split.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grow(
    bins: &BinMap,
    rows: Vec<u32>,
    grad: &[f64],
    hess: &[f64],
    stride: usize,
    outputs: &[usize],
    params: &GrowParams,
    round: usize,
    output: Option<usize>,
) -> Option<Tree> {
    let rules = params.rules;
    let find = |rows: &[u32], stats: &NodeStats, depth: usize| {
        if params.max_depth.is_some_and(|d| depth >= d) {
            None
        } else {
            best_split(bins, rows, grad, hess, stride, outputs, stats, rules)
        }
    };
    let stats = NodeStats::collect(&rows, grad, hess, stride, outputs);
    let split = find(&rows, &stats, 0);
    split.as_ref()?;

    let mut nodes = vec![Node::Leaf { value: Vec::new() }];
    let mut open = vec![Open { node: 0, rows, depth: 0, stats, split }];
    let mut n_leaves = 1;
    loop {
        if params.max_leaves.is_some_and(|m| n_leaves >= m) {
            break;
        }
        let mut pick: Option<usize> = None;
        for (i, o) in open.iter().enumerate() {
            if let Some(s) = &o.split {
                if pick.is_none_or(|p| s.gain > open[p].split.as_ref().unwrap().gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let leaf = open.remove(i);
        let split = leaf.split.unwrap();
        let column = bins.column(split.feature);
        let missing = bins.missing_bin(split.feature);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = leaf.rows.iter().partition(|&&r| {
            let b = column[r as usize];
            if b == missing {
                split.default_left
            } else {
                b <= split.bin
            }
        });
        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes.push(Node::Leaf { value: Vec::new() });
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            bin: split.bin,
            // the last bin only splits off missing values
            threshold: bins.thresholds(split.feature).get(split.bin as usize).copied().unwrap_or(f64::MAX),
            default_left: split.default_left,
            left: left_id,
            right: right_id,
        };
        n_leaves += 1;
        for (id, rows) in [(left_id, left_rows), (right_id, right_rows)] {
            let stats = NodeStats::collect(&rows, grad, hess, stride, outputs);
            let split = find(&rows, &stats, leaf.depth + 1);
            open.push(Open { node: id, rows, depth: leaf.depth + 1, stats, split });
        }
        // keep creation order so ties resolve to the earliest leaf
        open.sort_by_key(|o| o.node);
    }
    for o in open {
        let value = o
            .stats
            .grad
            .iter()
            .zip(&o.stats.hess)
            .map(|(&g, &h)| leaf_weight(g, h, rules.lambda, rules.alpha))
            .collect();
        nodes[o.node] = Node::Leaf { value };
    }
    Some(Tree { round, output, nodes })
}
