//! Seeded permutation feature importance on held-out rows.
//!
//! A feature's importance is the mean accuracy the model loses when that
//! column is shuffled among the held-out rows, over a number of repeats.
//! Each (feature, repeat) pair shuffles with its own derived stream, so
//! results do not depend on evaluation order and features the model never
//! splits on can be skipped outright — their permuted predictions are the
//! baseline predictions, giving an exact zero drop.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::derive;

use super::{BoostModel, Rows};

/// Raw accuracy drops, one per (repeat, feature).
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSamples {
    pub n_features: usize,
    pub repeats: usize,
    /// Row-major: `drops[repeat * n_features + feature]`.
    pub drops: Vec<f64>,
}

impl ImportanceSamples {
    pub fn drop(&self, repeat: usize, feature: usize) -> f64 {
        self.drops[repeat * self.n_features + feature]
    }

    /// Mean drop per feature across repeats.
    pub fn means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for r in 0..self.repeats {
            for (j, slot) in out.iter_mut().enumerate() {
                *slot += self.drop(r, j);
            }
        }
        for slot in &mut out {
            *slot /= self.repeats as f64;
        }
        out
    }
}

/// Computes the full drop matrix over the holdout.
pub fn permutation_importance_samples(
    model: &BoostModel,
    data: Rows<'_>,
    rows: &[u32],
    labels: &[u8],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceSamples> {
    if rows.is_empty() {
        return Err(Error::Data("holdout is empty".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be positive".into()));
    }
    let m = rows.len();
    let width = data.n_cols();
    if width != model.n_features {
        return Err(Error::Model(format!(
            "holdout has {width} features, model expects {}",
            model.n_features
        )));
    }

    // Baseline scores and, per tree, each row's leaf output, so a permuted
    // column only costs re-walking the trees that split on it.
    let shrinkage = model.params.shrinkage;
    let n_trees = model.trees.len();
    let mut tree_outputs = vec![0.0f64; m * n_trees];
    let mut base_scores = vec![model.base_score; m];
    for (i, &row_id) in rows.iter().enumerate() {
        let row = data.row(row_id as usize);
        for (t, tree) in model.trees.iter().enumerate() {
            let v = tree.eval(row);
            tree_outputs[i * n_trees + t] = v;
            base_scores[i] += shrinkage * v;
        }
    }
    let correct = |score: f64, y: u8| u8::from(score > 0.0) == y;
    let baseline_acc = base_scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| correct(s, y))
        .count() as f64
        / m as f64;

    let used: BTreeSet<usize> = model.trees.iter().flat_map(|t| t.features_used()).collect();
    let trees_using: Vec<Vec<usize>> = {
        let mut map = vec![Vec::new(); width];
        for (t, tree) in model.trees.iter().enumerate() {
            for f in tree.features_used() {
                map[f].push(t);
            }
        }
        map
    };

    let mut drops = vec![0.0f64; repeats * width];
    let mut perm: Vec<u32> = (0..m as u32).collect();
    for &j in &used {
        let affected = &trees_using[j];
        for r in 0..repeats {
            perm.clear();
            perm.extend(0..m as u32);
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, j as u64, r as u64));
            perm.shuffle(&mut rng);

            let mut hits = 0usize;
            for (i, &row_id) in rows.iter().enumerate() {
                let row = data.row(row_id as usize);
                let donor = data.row(rows[perm[i] as usize] as usize);
                let mut score = base_scores[i];
                for &t in affected {
                    score -= shrinkage * tree_outputs[i * n_trees + t];
                    score += shrinkage * model.trees[t].eval_patched(row, j, donor[j]);
                }
                if correct(score, labels[i]) {
                    hits += 1;
                }
            }
            let acc = hits as f64 / m as f64;
            drops[r * width + j] = baseline_acc - acc;
        }
    }

    Ok(ImportanceSamples {
        n_features: width,
        repeats,
        drops,
    })
}

/// Mean accuracy drop per feature; may be negative.
pub fn permutation_importance(
    model: &BoostModel,
    data: Rows<'_>,
    rows: &[u32],
    labels: &[u8],
    repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    permutation_importance_samples(model, data, rows, labels, repeats, seed).map(|s| s.means())
}
