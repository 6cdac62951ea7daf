//! Gradient-boosted regression trees for binary classification.
//!
//! The model is an additive ensemble over logistic loss: the base score is
//! the training log-odds, every round fits a regression tree to the current
//! negative gradients with variance-reduction splits, and leaves take a
//! single damped Newton step. Predictions are
//! `sigmoid(base_score + shrinkage * sum of tree outputs)`.
//!
//! Fits are deterministic functions of the row multiset: samples are brought
//! into a canonical order before any accumulation, and split ties break
//! toward the lowest feature index and threshold. A serialized model
//! round-trips bit-exactly through its JSON form.

mod cv;
mod importance;
mod tree;

pub use cv::{cross_validate, stratified_folds, CvResult};
pub use importance::{permutation_importance, permutation_importance_samples, ImportanceSamples};
pub use tree::{Tree, TreeNode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use tree::{grow_tree, TrainingSet};

/// Borrowed row-major matrix view.
#[derive(Clone, Copy)]
pub struct Rows<'a> {
    values: &'a [f64],
    n_cols: usize,
}

impl<'a> Rows<'a> {
    pub fn new(values: &'a [f64], n_cols: usize) -> Result<Self> {
        if n_cols == 0 || !values.len().is_multiple_of(n_cols) {
            return Err(Error::Data(format!(
                "{} values do not tile into rows of width {n_cols}",
                values.len()
            )));
        }
        Ok(Rows { values, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub n_trees: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            n_trees: 100,
            shrinkage: 0.1,
            max_depth: 3,
            min_leaf: 5,
        }
    }
}

impl GbmParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be positive".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config(format!(
                "shrinkage must be in (0, 1], got {}",
                self.shrinkage
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be positive".into()));
        }
        Ok(())
    }
}

const MODEL_FORMAT: &str = "cdrml-gbm-v1";

/// Fitted boosted-tree classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub format: String,
    pub base_score: f64,
    pub params: GbmParams,
    pub n_features: usize,
    /// Mean training logistic loss after each round.
    pub train_loss: Vec<f64>,
    pub trees: Vec<Tree>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable `ln(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl BoostModel {
    /// Assembles a model from parts, validating tree structure.
    pub fn from_parts(
        base_score: f64,
        params: GbmParams,
        n_features: usize,
        trees: Vec<Tree>,
    ) -> Result<Self> {
        params.validate()?;
        for t in &trees {
            Tree::from_nodes(t.nodes.clone())?;
            if t.depth() > params.max_depth {
                return Err(Error::Model(format!(
                    "tree depth {} exceeds max_depth {}",
                    t.depth(),
                    params.max_depth
                )));
            }
        }
        Ok(BoostModel {
            format: MODEL_FORMAT.to_string(),
            base_score,
            params,
            n_features,
            train_loss: Vec::new(),
            trees,
        })
    }

    /// Raw additive score before the sigmoid.
    pub fn score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::Model(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        let mut s = self.base_score;
        for tree in &self.trees {
            s += self.params.shrinkage * tree.eval(row);
        }
        Ok(s)
    }

    /// Probability of the positive class, in (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.score(row)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BoostModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "unsupported model format {:?}",
                model.format
            )));
        }
        Ok(model)
    }
}

/// Canonical sample order: rows compared field by field, labels breaking
/// ties, so fits do not depend on input row order.
fn canonical_order(data: Rows<'_>, rows: &[u32], labels: &[u8]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..rows.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        let ra = data.row(rows[a as usize] as usize);
        let rb = data.row(rows[b as usize] as usize);
        for (va, vb) in ra.iter().zip(rb.iter()) {
            match va.total_cmp(vb) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        labels[a as usize].cmp(&labels[b as usize]).then(a.cmp(&b))
    });
    order
}

/// Fits a boosted-tree classifier on the selected rows.
///
/// `labels[k]` is the 0/1 label of `rows[k]`. Requires both classes present
/// and at least `2 * min_leaf` rows.
pub fn fit(data: Rows<'_>, rows: &[u32], labels: &[u8], params: &GbmParams) -> Result<BoostModel> {
    params.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if rows.len() < 2 * params.min_leaf {
        return Err(Error::Data(format!(
            "{} rows is fewer than 2 * min_leaf = {}",
            rows.len(),
            2 * params.min_leaf
        )));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Data("training labels contain a single class".into()));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("labels must be 0 or 1, got {bad}")));
    }

    let n = rows.len();
    let width = data.n_cols();
    let order = canonical_order(data, rows, labels);

    let mut cols = vec![0.0f64; n * width];
    let mut y = vec![0u8; n];
    for (k, &ord) in order.iter().enumerate() {
        let row = data.row(rows[ord as usize] as usize);
        for (j, &v) in row.iter().enumerate() {
            cols[j * n + k] = v;
        }
        y[k] = labels[ord as usize];
    }
    let set = TrainingSet::new(n, width, cols);

    let p_bar = (positives as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (p_bar / (1.0 - p_bar)).ln();

    let mut scores = vec![base_score; n];
    let mut residuals = vec![0.0f64; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut train_loss = Vec::with_capacity(params.n_trees);

    for _ in 0..params.n_trees {
        for k in 0..n {
            residuals[k] = f64::from(y[k]) - sigmoid(scores[k]);
        }
        let (mut tree, node_of) = grow_tree(&set, &residuals, params.max_depth, params.min_leaf);

        let mut numerator = vec![0.0f64; tree.nodes.len()];
        let mut denominator = vec![0.0f64; tree.nodes.len()];
        for k in 0..n {
            let leaf = node_of[k] as usize;
            let p = sigmoid(scores[k]);
            numerator[leaf] += residuals[k];
            denominator[leaf] += p * (1.0 - p);
        }
        for (i, node) in tree.nodes.iter_mut().enumerate() {
            if node.is_leaf() {
                node.value = numerator[i] / denominator[i].max(1e-12);
            }
        }

        for k in 0..n {
            scores[k] += params.shrinkage * tree.nodes[node_of[k] as usize].value;
        }
        let mut loss = 0.0;
        for k in 0..n {
            // -[y ln p + (1-y) ln (1-p)] written through softplus.
            let s = scores[k];
            loss += if y[k] == 1 { softplus(-s) } else { softplus(s) };
        }
        train_loss.push(loss / n as f64);
        trees.push(tree);
    }

    Ok(BoostModel {
        format: MODEL_FORMAT.to_string(),
        base_score,
        params: *params,
        n_features: width,
        train_loss,
        trees,
    })
}

/// Convenience for fitting on every row of a buffer.
pub fn fit_all(
    values: &[f64],
    n_cols: usize,
    labels: &[u8],
    params: &GbmParams,
) -> Result<BoostModel> {
    let data = Rows::new(values, n_cols)?;
    let rows: Vec<u32> = (0..data.n_rows() as u32).collect();
    fit(data, &rows, labels, params)
}
