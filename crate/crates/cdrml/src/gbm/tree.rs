//! Regression trees with exact, deterministic variance-reduction splits.
//!
//! Split candidates are midpoints between consecutive distinct values of a
//! feature within the node. The chosen split strictly maximizes the sum of
//! squared-residual reductions; ties go to the lowest feature index, then
//! the lowest threshold, so a fit is a pure function of the row multiset.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat tree node. Internal nodes carry `feature >= 0`; rows with
/// `row[feature] <= threshold` go left. Leaves carry the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: i32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

impl TreeNode {
    pub fn leaf(value: f64) -> Self {
        TreeNode {
            feature: -1,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature < 0
    }
}

/// One regression tree, rooted at node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Validates that every node is reachable from the root exactly once.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= nodes.len() {
                return Err(Error::Model(format!("child index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Model(format!("node {i} reached twice")));
            }
            seen[i] = true;
            let node = &nodes[i];
            if !node.is_leaf() {
                stack.push(node.left as usize);
                stack.push(node.right as usize);
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::Model(format!("node {orphan} unreachable")));
        }
        Ok(Tree { nodes })
    }

    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf() {
                return node.value;
            }
            i = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    /// Evaluates with one feature overridden, without copying the row.
    pub(crate) fn eval_patched(&self, row: &[f64], feature: usize, value: f64) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf() {
                return node.value;
            }
            let f = node.feature as usize;
            let x = if f == feature { value } else { row[f] };
            i = if x <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    /// Longest root-to-leaf path length in edges.
    pub fn depth(&self) -> usize {
        fn depth_at(nodes: &[TreeNode], i: usize) -> usize {
            let node = &nodes[i];
            if node.is_leaf() {
                0
            } else {
                1 + depth_at(nodes, node.left as usize).max(depth_at(nodes, node.right as usize))
            }
        }
        depth_at(&self.nodes, 0)
    }

    pub fn features_used(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter(|n| !n.is_leaf())
            .map(|n| n.feature as usize)
            .collect()
    }
}

/// Column-major training view plus per-feature value-sorted sample orders,
/// built once per fit and shared by every tree.
pub(crate) struct TrainingSet {
    pub n: usize,
    pub width: usize,
    /// Column-major values, `cols[j * n + k]`, in canonical sample order.
    pub cols: Vec<f64>,
    /// Per feature, sample indices sorted by (value, index).
    pub sorted: Vec<u32>,
}

impl TrainingSet {
    pub fn new(n: usize, width: usize, cols: Vec<f64>) -> Self {
        let mut sorted = vec![0u32; n * width];
        sorted.par_chunks_mut(n).enumerate().for_each(|(j, chunk)| {
            let col = &cols[j * n..(j + 1) * n];
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = k as u32;
            }
            chunk.sort_unstable_by(|&a, &b| {
                col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b))
            });
        });
        TrainingSet {
            n,
            width,
            cols,
            sorted,
        }
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    pub fn sorted_col(&self, j: usize) -> &[u32] {
        &self.sorted[j * self.n..(j + 1) * self.n]
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

#[derive(Clone, Copy)]
struct LevelNode {
    node: u32,
    count: u32,
    sum: f64,
}

/// Grows one tree on the residuals and returns it together with the leaf
/// assignment of every training sample.
pub(crate) fn grow_tree(
    set: &TrainingSet,
    residuals: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> (Tree, Vec<u32>) {
    let n = set.n;
    let mut nodes: Vec<TreeNode> = vec![TreeNode::leaf(0.0)];
    let mut node_of: Vec<u32> = vec![0; n];

    let total_sum: f64 = residuals.iter().sum();
    let mut level: Vec<LevelNode> = vec![LevelNode {
        node: 0,
        count: n as u32,
        sum: total_sum,
    }];

    for _ in 0..max_depth {
        let splittable: Vec<LevelNode> = level
            .iter()
            .copied()
            .filter(|ln| ln.count as usize >= 2 * min_leaf)
            .collect();
        if splittable.is_empty() {
            break;
        }
        let mut slot_of = vec![u32::MAX; nodes.len()];
        for (s, ln) in splittable.iter().enumerate() {
            slot_of[ln.node as usize] = s as u32;
        }

        // Best candidate per (feature, slot); merged across features in
        // ascending feature order so gain ties resolve to the lowest feature
        // index and then, within a feature's ascending scan, to the lowest
        // threshold.
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..set.width)
            .into_par_iter()
            .map(|j| {
                let col = set.col(j);
                let order = set.sorted_col(j);
                let mut runs: Vec<(u32, f64, f64, bool)> =
                    splittable.iter().map(|_| (0u32, 0.0, 0.0, false)).collect();
                let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
                for &k in order {
                    let slot = slot_of[node_of[k as usize] as usize];
                    if slot == u32::MAX {
                        continue;
                    }
                    let s = slot as usize;
                    let v = col[k as usize];
                    let (count, sum, prev, has_prev) = runs[s];
                    if has_prev && v != prev {
                        let parent = &splittable[s];
                        let right_count = parent.count - count;
                        if count as usize >= min_leaf && right_count as usize >= min_leaf {
                            let left = sum * sum / f64::from(count);
                            let right_sum = parent.sum - sum;
                            let right = right_sum * right_sum / f64::from(right_count);
                            let whole = parent.sum * parent.sum / f64::from(parent.count);
                            let gain = left + right - whole;
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    threshold: prev + (v - prev) / 2.0,
                                });
                            }
                        }
                    }
                    runs[s] = (count + 1, sum + residuals[k as usize], v, true);
                }
                best
            })
            .collect();

        let mut chosen: Vec<Option<(usize, Candidate)>> = vec![None; splittable.len()];
        for (j, bests) in per_feature.iter().enumerate() {
            for (s, cand) in bests.iter().enumerate() {
                if let Some(c) = cand {
                    if c.gain > 0.0 && chosen[s].is_none_or(|(_, b)| c.gain > b.gain) {
                        chosen[s] = Some((j, *c));
                    }
                }
            }
        }

        let mut split_info: Vec<Option<(usize, f64, u32, u32)>> = vec![None; nodes.len()];
        let mut next_level: Vec<LevelNode> = Vec::new();
        let mut any_split = false;
        for (s, ln) in splittable.iter().enumerate() {
            if let Some((j, cand)) = chosen[s] {
                let left = nodes.len() as u32;
                let right = left + 1;
                nodes.push(TreeNode::leaf(0.0));
                nodes.push(TreeNode::leaf(0.0));
                let parent = &mut nodes[ln.node as usize];
                parent.feature = j as i32;
                parent.threshold = cand.threshold;
                parent.left = left;
                parent.right = right;
                parent.value = 0.0;
                split_info[ln.node as usize] = Some((j, cand.threshold, left, right));
                next_level.push(LevelNode {
                    node: left,
                    count: 0,
                    sum: 0.0,
                });
                next_level.push(LevelNode {
                    node: right,
                    count: 0,
                    sum: 0.0,
                });
                any_split = true;
            }
        }
        if !any_split {
            break;
        }

        let mut stats_of = vec![u32::MAX; nodes.len()];
        for (i, ln) in next_level.iter().enumerate() {
            stats_of[ln.node as usize] = i as u32;
        }
        for k in 0..n {
            if let Some((j, threshold, left, right)) = split_info[node_of[k] as usize] {
                let child = if set.col(j)[k] <= threshold {
                    left
                } else {
                    right
                };
                node_of[k] = child;
                let stat = &mut next_level[stats_of[child as usize] as usize];
                stat.count += 1;
                stat.sum += residuals[k];
            }
        }
        level = next_level;
    }

    (Tree { nodes }, node_of)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn training_set(rows: &[&[f64]]) -> TrainingSet {
        let n = rows.len();
        let width = rows[0].len();
        let mut cols = vec![0.0; n * width];
        for (k, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                cols[j * n + k] = *v;
            }
        }
        TrainingSet::new(n, width, cols)
    }

    #[test]
    fn splits_at_the_midpoint_of_the_best_boundary() {
        let set = training_set(&[&[1.0], &[2.0], &[10.0], &[11.0]]);
        let residuals = [-0.5, -0.5, 0.5, 0.5];
        let (tree, node_of) = grow_tree(&set, &residuals, 1, 1);
        let root = &tree.nodes[0];
        assert_eq!(root.feature, 0);
        assert_eq!(root.threshold, 6.0);
        assert_eq!(node_of[0], node_of[1]);
        assert_eq!(node_of[2], node_of[3]);
        assert_ne!(node_of[0], node_of[2]);
    }

    #[test]
    fn gain_ties_prefer_the_lowest_feature() {
        // Feature 1 mirrors feature 0, so gains tie exactly.
        let set = training_set(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]);
        let residuals = [-1.0, -1.0, 1.0, 1.0];
        let (tree, _) = grow_tree(&set, &residuals, 1, 1);
        assert_eq!(tree.nodes[0].feature, 0);
    }

    #[test]
    fn min_leaf_blocks_unbalanced_splits() {
        // The best unconstrained split isolates the last point.
        let set = training_set(&[&[0.0], &[1.0], &[2.0], &[100.0]]);
        let residuals = [0.0, 0.0, 0.0, 10.0];
        let (tree, _) = grow_tree(&set, &residuals, 3, 2);
        for node in &tree.nodes {
            if !node.is_leaf() {
                assert_eq!(node.threshold, 1.5);
            }
        }
    }

    #[test]
    fn constant_features_grow_no_split() {
        let set = training_set(&[&[5.0], &[5.0], &[5.0], &[5.0]]);
        let residuals = [1.0, -1.0, 1.0, -1.0];
        let (tree, _) = grow_tree(&set, &residuals, 3, 1);
        assert_eq!(tree.nodes.len(), 1);
        assert!(tree.nodes[0].is_leaf());
    }

    #[test]
    fn depth_limit_is_respected() {
        let rows: Vec<Vec<f64>> = (0..32).map(|i| vec![f64::from(i)]).collect();
        let row_refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let set = training_set(&row_refs);
        let residuals: Vec<f64> = (0..32).map(|i| f64::from(i % 7)).collect();
        let (tree, _) = grow_tree(&set, &residuals, 3, 1);
        assert!(tree.depth() <= 3);
        assert!(tree.depth() > 0);
    }

    #[test]
    fn from_nodes_rejects_malformed_trees() {
        assert!(Tree::from_nodes(vec![]).is_err());
        // Cycle: root points at itself.
        let cyclic = vec![TreeNode {
            feature: 0,
            threshold: 0.5,
            left: 0,
            right: 0,
            value: 0.0,
        }];
        assert!(Tree::from_nodes(cyclic).is_err());
        // Orphan node.
        let orphan = vec![TreeNode::leaf(1.0), TreeNode::leaf(2.0)];
        assert!(Tree::from_nodes(orphan).is_err());
        // Well-formed stump.
        let stump = vec![
            TreeNode {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
                value: 0.0,
            },
            TreeNode::leaf(-1.0),
            TreeNode::leaf(1.0),
        ];
        let tree = Tree::from_nodes(stump).unwrap();
        assert_eq!(tree.eval(&[0.0]), -1.0);
        assert_eq!(tree.eval(&[1.0]), 1.0);
        assert_eq!(tree.eval_patched(&[0.0], 0, 1.0), 1.0);
    }
}
