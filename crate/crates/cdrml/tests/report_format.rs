//! Golden-file coverage of the report CSV formats. The reports here are
//! hand-built, so the goldens pin the writers' byte layout without tying
//! the test to model internals. Refresh with `UPDATE_GOLDEN=1 cargo test`.

use std::fs;
use std::path::PathBuf;

use cdrml::data::Stratum;
use cdrml::experiment::{
    CategoryRow, CellOutcome, FeatureRow, ImportanceReport, SuiteCell, SuiteResult, Task,
};
use cdrml::grammar::FeatureCategory;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {name} ({e}); run with UPDATE_GOLDEN=1"));
    assert_eq!(actual, expected, "{name} drifted from its golden file");
}

fn sample_report(task: Task, stratum: Stratum, shift: f64) -> ImportanceReport {
    let features = vec![
        FeatureRow {
            name: "any.any.anyday.nogroup.events.count.identity".into(),
            category: FeatureCategory::Usage,
            mean: 0.0125 + shift,
            std: 0.002,
        },
        FeatureRow {
            name: "any.out.weekday.nogroup.uniq_locations.distinct.identity".into(),
            category: FeatureCategory::Mobility,
            mean: 0.21 - shift,
            std: 0.0375,
        },
        FeatureRow {
            name: "sms.in.anyday.nogroup.degree_pctl.count.identity".into(),
            category: FeatureCategory::Network,
            mean: -0.005,
            std: 0.001,
        },
    ];
    let categories = vec![
        CategoryRow {
            category: FeatureCategory::Usage,
            mean: 0.0125 + shift,
            median: 0.0125 + shift,
            q1: 0.0125 + shift,
            q3: 0.0125 + shift,
        },
        CategoryRow {
            category: FeatureCategory::Mobility,
            mean: 0.21 - shift,
            median: 0.21 - shift,
            q1: 0.21 - shift,
            q3: 0.21 - shift,
        },
        CategoryRow {
            category: FeatureCategory::Network,
            mean: -0.005,
            median: -0.005,
            q1: -0.005,
            q3: -0.005,
        },
    ];
    ImportanceReport {
        task,
        stratum: Some(stratum),
        n_sampled: 64,
        features,
        categories,
        fold_accuracy: vec![0.8125, 0.875, 0.75, 0.8125, 0.875],
        accuracy_mean: 0.825,
        accuracy_std: 0.0457,
    }
}

#[test]
fn importance_report_matches_golden() {
    let report = sample_report(Task::AdoptionVsVoice, Stratum::Male, 0.0);
    let csv = report.to_csv();
    // Shape: header + features + categories + folds + 2 summary rows.
    assert_eq!(csv.lines().count(), 1 + 3 + 3 + 5 + 2);
    check_golden("importance_report.csv", &csv);
}

#[test]
fn accuracy_summary_matches_golden() {
    let mut cells = Vec::new();
    for (i, &task) in Task::ALL.iter().enumerate() {
        for (j, &stratum) in Stratum::ALL.iter().enumerate() {
            let outcome = if task == Task::P2PVsVoice
                && stratum.axis() == cdrml::data::StratumAxis::DistrictWealth
            {
                CellOutcome::Skipped(format!(
                    "stratum {} has 3 positive rows for task p2p, fewer than min_n = 20",
                    stratum.token()
                ))
            } else {
                CellOutcome::Ok(sample_report(task, stratum, (i * 6 + j) as f64 * 1e-3))
            };
            cells.push(SuiteCell {
                task,
                stratum,
                outcome,
            });
        }
    }
    let suite = SuiteResult { cells };
    let csv = suite.accuracy_csv();
    assert_eq!(csv.lines().count(), 13);
    assert_eq!(suite.n_ok(), 10);
    check_golden("accuracy_summary.csv", &csv);
}
