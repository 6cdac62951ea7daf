//! Stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::derive;

use super::{fit, GbmParams, Rows};

/// Assigns each sample to a fold, preserving the class ratio: each class is
/// shuffled with its own derived stream and dealt round-robin.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<u32>> {
    if k < 2 {
        return Err(Error::Experiment(format!("k must be at least 2, got {k}")));
    }
    let mut folds = vec![0u32; labels.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::Experiment(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 0xF01D, u64::from(class)));
        members.shuffle(&mut rng);
        for (i, &row) in members.iter().enumerate() {
            folds[row] = (i % k) as u32;
        }
    }
    Ok(folds)
}

/// Cross-validation accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub fold_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub(crate) fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs stratified k-fold cross-validation of the boosted classifier over
/// the selected rows. `labels[i]` belongs to `rows[i]`. A held-out row
/// counts as correct when `proba > 0.5` matches its label.
pub fn cross_validate(
    data: Rows<'_>,
    rows: &[u32],
    labels: &[u8],
    k: usize,
    seed: u64,
    params: &GbmParams,
) -> Result<CvResult> {
    if rows.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let folds = stratified_folds(labels, k, seed)?;
    let mut fold_accuracy = Vec::with_capacity(k);
    for fold in 0..k as u32 {
        let mut train_rows = Vec::new();
        let mut train_labels = Vec::new();
        let mut test_rows = Vec::new();
        let mut test_labels = Vec::new();
        for (i, &f) in folds.iter().enumerate() {
            if f == fold {
                test_rows.push(rows[i]);
                test_labels.push(labels[i]);
            } else {
                train_rows.push(rows[i]);
                train_labels.push(labels[i]);
            }
        }
        let model = fit(data, &train_rows, &train_labels, params)?;
        let correct = test_rows
            .iter()
            .zip(&test_labels)
            .filter(|&(&row, &y)| {
                let p = model
                    .predict_proba(data.row(row as usize))
                    .expect("width matches");
                u8::from(p > 0.5) == y
            })
            .count();
        fold_accuracy.push(correct as f64 / test_rows.len() as f64);
    }
    let (mean, std) = mean_and_std(&fold_accuracy);
    Ok(CvResult {
        fold_accuracy,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_hundred_rows_make_even_folds() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 50)).collect();
        let folds = stratified_folds(&labels, 5, 9).unwrap();
        for fold in 0..5u32 {
            let members: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(_, &f)| f == fold)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(members.len(), 20);
            let positives = members.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(positives, 10);
        }
    }

    #[test]
    fn identical_seed_means_identical_folds() {
        let labels: Vec<u8> = (0..61).map(|i| u8::from(i % 3 == 0)).collect();
        assert_eq!(
            stratified_folds(&labels, 5, 42).unwrap(),
            stratified_folds(&labels, 5, 42).unwrap()
        );
        assert_ne!(
            stratified_folds(&labels, 5, 42).unwrap(),
            stratified_folds(&labels, 5, 43).unwrap()
        );
    }

    #[test]
    fn class_smaller_than_k_is_an_error() {
        let labels = [0u8, 0, 0, 0, 0, 1, 1];
        assert!(stratified_folds(&labels, 3, 1).is_err());
    }

    #[test]
    fn cross_validation_is_deterministic_and_accurate_on_separable_data() {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let y = u8::from(i % 2 == 0);
            values.push(if y == 1 {
                10.0 + f64::from(i) * 0.01
            } else {
                f64::from(i) * 0.01
            });
            labels.push(y);
        }
        let data = Rows::new(&values, 1).unwrap();
        let rows: Vec<u32> = (0..60).collect();
        let params = GbmParams {
            n_trees: 10,
            min_leaf: 2,
            ..GbmParams::default()
        };
        let a = cross_validate(data, &rows, &labels, 5, 7, &params).unwrap();
        let b = cross_validate(data, &rows, &labels, 5, 7, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 0.95, "mean accuracy {}", a.mean);
        assert_eq!(a.fold_accuracy.len(), 5);
    }
}
