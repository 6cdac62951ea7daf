//! The two classification tasks, per-stratum balanced sampling, and the
//! experiment suite with its CSV reports.
//!
//! An experiment cell is one (task, stratum) pair: rows of the stratum are
//! balanced to exact 50/50 by keeping the whole minority class and
//! downsampling the majority with a seeded draw, then evaluated with
//! stratified k-fold cross-validation. Each fold's held-out rows provide the
//! accuracy and the permutation-importance samples; per-feature importance
//! aggregates over folds and repeats, and per-category rows summarize the
//! member features. The full suite runs both tasks over all six strata;
//! cells with too little data are recorded as skipped, never fatal.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Stratum, UserClass};
use crate::engine::FeatureMatrix;
use crate::error::{Error, Result};
use crate::gbm::{fit, permutation_importance_samples, stratified_folds, GbmParams, Rows};
use crate::grammar::FeatureCategory;
use crate::seeds::derive;

/// The two supervised tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Voice-only (0) versus any mobile-money user (1).
    AdoptionVsVoice,
    /// Voice-only (0) versus P2P user (1); registered-only users sit in
    /// neither class and are excluded.
    P2PVsVoice,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::AdoptionVsVoice, Task::P2PVsVoice];

    pub fn token(&self) -> &'static str {
        match self {
            Task::AdoptionVsVoice => "adoption",
            Task::P2PVsVoice => "p2p",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        match s {
            "adoption" => Ok(Task::AdoptionVsVoice),
            "p2p" => Ok(Task::P2PVsVoice),
            other => Err(Error::Experiment(format!("unknown task {other:?}"))),
        }
    }

    /// Binary label of a user class under this task, `None` when excluded.
    pub fn label(&self, class: UserClass) -> Option<u8> {
        match self {
            Task::AdoptionVsVoice => match class {
                UserClass::VoiceOnly => Some(0),
                UserClass::Registered | UserClass::P2P => Some(1),
            },
            Task::P2PVsVoice => match class {
                UserClass::VoiceOnly => Some(0),
                UserClass::P2P => Some(1),
                UserClass::Registered => None,
            },
        }
    }
}

/// One experiment cell description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: Task,
    /// `None` runs over the whole roster rather than one stratum.
    pub stratum: Option<Stratum>,
    pub seed: u64,
    pub gbm: GbmParams,
    pub k: usize,
    pub min_n: usize,
    pub repeats: usize,
}

impl ExperimentSpec {
    pub fn new(task: Task, stratum: Option<Stratum>, seed: u64) -> Self {
        ExperimentSpec {
            task,
            stratum,
            seed,
            gbm: GbmParams::default(),
            k: 5,
            min_n: 20,
            repeats: 10,
        }
    }
}

fn stratum_rows(matrix: &FeatureMatrix, spec: &ExperimentSpec) -> (Vec<u32>, Vec<u8>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..matrix.n_rows() {
        if let Some(stratum) = spec.stratum {
            if matrix.stratum(i, stratum.axis()) != Some(stratum) {
                continue;
            }
        }
        if let Some(y) = spec.task.label(matrix.classes[i]) {
            rows.push(i as u32);
            labels.push(y);
        }
    }
    (rows, labels)
}

/// Draws the balanced subset for a cell: the whole minority class plus an
/// equal-size seeded uniform sample of the majority, returned in ascending
/// row order with labels attached.
pub fn balanced_sample(
    matrix: &FeatureMatrix,
    spec: &ExperimentSpec,
) -> Result<(Vec<u32>, Vec<u8>)> {
    let (rows, labels) = stratum_rows(matrix, spec);
    let mut positives: Vec<u32> = Vec::new();
    let mut negatives: Vec<u32> = Vec::new();
    for (&row, &y) in rows.iter().zip(&labels) {
        if y == 1 {
            positives.push(row);
        } else {
            negatives.push(row);
        }
    }
    let where_ = spec.stratum.map_or("population".to_string(), |s| {
        format!("stratum {}", s.token())
    });
    for (name, class_rows) in [("positive", &positives), ("negative", &negatives)] {
        if class_rows.len() < spec.min_n {
            return Err(Error::Experiment(format!(
                "{where_} has {} {name} rows for task {}, fewer than min_n = {}",
                class_rows.len(),
                spec.task.token(),
                spec.min_n
            )));
        }
    }

    let (minority, majority) = if positives.len() <= negatives.len() {
        (&positives, &mut negatives)
    } else {
        (&negatives, &mut positives)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, 0xBA1A_4CED, 0));
    majority.shuffle(&mut rng);
    let mut selected: Vec<u32> = minority
        .iter()
        .chain(majority.iter().take(minority.len()))
        .copied()
        .collect();
    selected.sort_unstable();

    let selected_labels = selected
        .iter()
        .map(|&row| {
            spec.task
                .label(matrix.classes[row as usize])
                .expect("sampled rows are labeled")
        })
        .collect();
    Ok((selected, selected_labels))
}

/// Per-feature importance summary.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub name: String,
    pub category: FeatureCategory,
    pub mean: f64,
    pub std: f64,
}

/// Distribution summary of one category's member-feature importances.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryRow {
    pub category: FeatureCategory,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Full result of one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub task: Task,
    pub stratum: Option<Stratum>,
    pub n_sampled: usize,
    pub features: Vec<FeatureRow>,
    pub categories: Vec<CategoryRow>,
    pub fold_accuracy: Vec<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Quantile by linear interpolation between closest ranks.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl ImportanceReport {
    pub fn category_mean(&self, category: FeatureCategory) -> f64 {
        self.categories
            .iter()
            .find(|c| c.category == category)
            .map_or(0.0, |c| c.mean)
    }

    /// Category with the highest mean importance; enum order breaks ties.
    pub fn top_category(&self) -> FeatureCategory {
        let mut best = self.categories[0].category;
        let mut best_mean = self.categories[0].mean;
        for row in &self.categories[1..] {
            if row.mean > best_mean {
                best = row.category;
                best_mean = row.mean;
            }
        }
        best
    }

    /// Rows: one per feature, one per category, one per fold, plus the
    /// accuracy mean and std lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("row_type,name,category,mean,std,median,q1,q3\n");
        for f in &self.features {
            let _ = writeln!(
                out,
                "feature,{},{},{},{},,,",
                f.name,
                f.category.token(),
                f.mean,
                f.std
            );
        }
        for c in &self.categories {
            let _ = writeln!(
                out,
                "category,,{},{},,{},{},{}",
                c.category.token(),
                c.mean,
                c.median,
                c.q1,
                c.q3
            );
        }
        for (i, acc) in self.fold_accuracy.iter().enumerate() {
            let _ = writeln!(out, "fold_accuracy,fold_{i},,{acc},,,,");
        }
        let _ = writeln!(out, "accuracy_mean,,,{},,,,", self.accuracy_mean);
        let _ = writeln!(out, "accuracy_std,,,{},,,,", self.accuracy_std);
        out
    }
}

/// Runs one cell: balanced sample, k-fold fits, held-out accuracy, and
/// permutation importance aggregated over folds and repeats.
pub fn run_experiment(spec: &ExperimentSpec, matrix: &FeatureMatrix) -> Result<ImportanceReport> {
    let (rows, labels) = balanced_sample(matrix, spec)?;
    let data = Rows::new(matrix.values(), matrix.n_cols())?;
    let folds = stratified_folds(&labels, spec.k, derive(spec.seed, 0xF0_1D5, 0))?;

    let width = matrix.n_cols();
    let mut all_drops: Vec<f64> = Vec::with_capacity(spec.k * spec.repeats * width);
    let mut fold_accuracy = Vec::with_capacity(spec.k);
    for fold in 0..spec.k as u32 {
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
        let model = fit(data, &train_rows, &train_labels, &spec.gbm)?;
        let correct = test_rows
            .iter()
            .zip(&test_labels)
            .filter(|&(&row, &y)| {
                let p = model.predict_proba(data.row(row as usize)).expect("width");
                u8::from(p > 0.5) == y
            })
            .count();
        fold_accuracy.push(correct as f64 / test_rows.len() as f64);

        let samples = permutation_importance_samples(
            &model,
            data,
            &test_rows,
            &test_labels,
            spec.repeats,
            derive(spec.seed, 0x1_4B02, u64::from(fold)),
        )?;
        all_drops.extend_from_slice(&samples.drops);
    }

    let n_samples = spec.k * spec.repeats;
    let mut features = Vec::with_capacity(width);
    let mut scratch = Vec::with_capacity(n_samples);
    for j in 0..width {
        scratch.clear();
        for s in 0..n_samples {
            scratch.push(all_drops[s * width + j]);
        }
        let (mean, std) = mean_std(&scratch);
        features.push(FeatureRow {
            name: matrix.descriptor_names[j].clone(),
            category: matrix.categories[j],
            mean,
            std,
        });
    }

    let categories = FeatureCategory::ALL
        .iter()
        .map(|&category| {
            let mut member_means: Vec<f64> = features
                .iter()
                .filter(|f| f.category == category)
                .map(|f| f.mean)
                .collect();
            member_means.sort_by(f64::total_cmp);
            let (mean, _) = mean_std(&member_means);
            CategoryRow {
                category,
                mean,
                median: quantile(&member_means, 0.5),
                q1: quantile(&member_means, 0.25),
                q3: quantile(&member_means, 0.75),
            }
        })
        .collect();

    let (accuracy_mean, accuracy_std) = mean_std(&fold_accuracy);
    Ok(ImportanceReport {
        task: spec.task,
        stratum: spec.stratum,
        n_sampled: rows.len(),
        features,
        categories,
        fold_accuracy,
        accuracy_mean,
        accuracy_std,
    })
}

/// Outcome of one suite cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Ok(ImportanceReport),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCell {
    pub task: Task,
    pub stratum: Stratum,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub cells: Vec<SuiteCell>,
}

/// Per-cell seeds derive from the base seed and the cell position, so one
/// cell's data never shifts another's draws.
pub fn run_suite(
    matrix: &FeatureMatrix,
    seed: u64,
    gbm: GbmParams,
    k: usize,
    min_n: usize,
    repeats: usize,
) -> SuiteResult {
    let mut cells = Vec::with_capacity(12);
    for (ti, &task) in Task::ALL.iter().enumerate() {
        for (si, &stratum) in Stratum::ALL.iter().enumerate() {
            let spec = ExperimentSpec {
                task,
                stratum: Some(stratum),
                seed: derive(seed, 0xCE11, (ti * 8 + si) as u64),
                gbm,
                k,
                min_n,
                repeats,
            };
            let outcome = match run_experiment(&spec, matrix) {
                Ok(report) => CellOutcome::Ok(report),
                Err(e) => CellOutcome::Skipped(e.to_string()),
            };
            cells.push(SuiteCell {
                task,
                stratum,
                outcome,
            });
        }
    }
    SuiteResult { cells }
}

fn csv_escape(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

impl SuiteResult {
    pub fn n_ok(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Ok(_)))
            .count()
    }

    /// One row per cell, mirroring the per-stratum accuracy summary.
    pub fn accuracy_csv(&self) -> String {
        let mut out =
            String::from("task,axis,stratum,status,n_sampled,accuracy_mean,accuracy_std,reason\n");
        for cell in &self.cells {
            let axis = match cell.stratum.axis() {
                crate::data::StratumAxis::Gender => "gender",
                crate::data::StratumAxis::DistrictKind => "district",
                crate::data::StratumAxis::DistrictWealth => "wealth",
            };
            match &cell.outcome {
                CellOutcome::Ok(report) => {
                    let _ = writeln!(
                        out,
                        "{},{axis},{},ok,{},{},{},",
                        cell.task.token(),
                        cell.stratum.token(),
                        report.n_sampled,
                        report.accuracy_mean,
                        report.accuracy_std
                    );
                }
                CellOutcome::Skipped(reason) => {
                    let _ = writeln!(
                        out,
                        "{},{axis},{},skipped,,,,{}",
                        cell.task.token(),
                        cell.stratum.token(),
                        csv_escape(reason)
                    );
                }
            }
        }
        out
    }

    /// Writes `importance_<task>_<stratum>.csv` per successful cell plus
    /// `accuracy_summary.csv`. Returns the number of reports written.
    pub fn write_reports(&self, dir: &Path) -> Result<usize> {
        fs::create_dir_all(dir)?;
        let mut written = 0;
        for cell in &self.cells {
            if let CellOutcome::Ok(report) = &cell.outcome {
                let name = format!(
                    "importance_{}_{}.csv",
                    cell.task.token(),
                    cell.stratum.token()
                );
                fs::write(dir.join(name), report.to_csv())?;
                written += 1;
            }
        }
        fs::write(dir.join("accuracy_summary.csv"), self.accuracy_csv())?;
        Ok(written)
    }
}
