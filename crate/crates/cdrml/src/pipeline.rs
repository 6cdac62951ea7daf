//! Run configuration and end-to-end orchestration.
//!
//! A run is described by one JSON [`RunConfig`] with full defaults. The
//! top-level seed threads through every stage: the generator, the sampler,
//! fold assignment and permutation draws all work from streams derived from
//! it, so two runs with the same config produce byte-identical files
//! whatever the thread count. The resolved configuration is written beside
//! the outputs for the record.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calendar::Calendar;
use crate::data::{
    ingest_events, ingest_money, ingest_roster, write_events_csv, write_money_csv, write_roster_csv,
};
use crate::engine::build_matrix;
use crate::error::{Error, Result};
use crate::experiment::run_suite;
use crate::gbm::GbmParams;
use crate::grammar::enumerate_descriptors;
use crate::seeds::derive;
use crate::synth::{generate, PopulationConfig};

/// Paths to pre-existing input files, used when no generator is configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub cdr: PathBuf,
    pub mmtr: PathBuf,
    pub roster: PathBuf,
}

/// Full pipeline configuration; defaults fill everything that is omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Generator settings; its seed is re-derived from the top-level seed.
    pub synth: Option<PopulationConfig>,
    /// Existing inputs, used when `synth` is absent.
    pub inputs: Option<InputPaths>,
    pub utc_offset_minutes: i32,
    /// Comma-separated weekend day names, e.g. `"SAT,SUN"`.
    pub weekend: String,
    pub strict_ingest: bool,
    pub gbm: GbmParams,
    pub folds: usize,
    pub min_n: usize,
    pub repeats: usize,
    /// Worker threads; absent means the machine's parallelism.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            synth: Some(PopulationConfig::default()),
            inputs: None,
            utc_offset_minutes: 0,
            weekend: "SAT,SUN".to_string(),
            strict_ingest: false,
            gbm: GbmParams::default(),
            folds: 5,
            min_n: 20,
            repeats: 10,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            msg: format!("cannot read config: {e}"),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn calendar(&self) -> Result<Calendar> {
        Calendar::with_weekend_names(self.utc_offset_minutes, &self.weekend)
    }

    /// Applies seed threading: the generator draws from a stream derived
    /// from the run seed.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if let Some(synth) = &mut out.synth {
            synth.seed = derive(out.seed, 0x5EED, 0);
        }
        out
    }
}

/// Stage-level counters from one full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub n_subscribers: usize,
    pub n_descriptors: usize,
    pub events_accepted: usize,
    pub events_rejected: usize,
    pub money_accepted: usize,
    pub money_rejected: usize,
    pub reports_written: usize,
    pub cells_skipped: usize,
}

pub type Logger<'a> = &'a (dyn Fn(&str, &str, &str) + Sync);

/// A logger that drops everything.
pub fn null_logger() -> impl Fn(&str, &str, &str) + Sync {
    |_: &str, _: &str, _: &str| {}
}

fn run_stages(config: &RunConfig, out_dir: &Path, log: Logger<'_>) -> Result<PipelineSummary> {
    let resolved = config.resolved();
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("run_config.json"), resolved.to_json())?;

    let calendar = resolved.calendar()?;

    let (cdr_path, mmtr_path, roster_path) = if let Some(synth_config) = &resolved.synth {
        log("info", "synth", "generating population");
        let population = generate(synth_config)?;
        let cdr = out_dir.join("cdr.csv");
        let mmtr = out_dir.join("mmtr.csv");
        let roster = out_dir.join("roster.csv");
        write_events_csv(&cdr, &population.events)?;
        write_money_csv(&mmtr, &population.money)?;
        write_roster_csv(&roster, &population.roster)?;
        log(
            "info",
            "synth",
            &format!(
                "wrote {} events, {} money rows, {} subscribers",
                population.events.len(),
                population.money.len(),
                population.roster.len()
            ),
        );
        (cdr, mmtr, roster)
    } else if let Some(inputs) = &resolved.inputs {
        (
            inputs.cdr.clone(),
            inputs.mmtr.clone(),
            inputs.roster.clone(),
        )
    } else {
        return Err(Error::Config(
            "config needs either a synth section or an inputs section".into(),
        ));
    };

    log("info", "ingest", "reading input files");
    let (events, event_report) = ingest_events(&cdr_path, resolved.strict_ingest)?;
    let (money, money_report) = ingest_money(&mmtr_path, resolved.strict_ingest)?;
    let (roster, _) = ingest_roster(&roster_path, resolved.strict_ingest)?;

    log("info", "featurize", "building the feature matrix");
    let descriptors = enumerate_descriptors();
    let (matrix, _build) = build_matrix(&events, &money, &roster, &descriptors, &calendar)?;
    matrix.write_csv(&out_dir.join("features.csv"))?;
    log(
        "info",
        "featurize",
        &format!("{} rows x {} columns", matrix.n_rows(), matrix.n_cols()),
    );

    log("info", "report", "running the experiment suite");
    let suite = run_suite(
        &matrix,
        derive(resolved.seed, 0x5017E, 0),
        resolved.gbm,
        resolved.folds,
        resolved.min_n,
        resolved.repeats,
    );
    let reports_dir = out_dir.join("reports");
    let reports_written = suite.write_reports(&reports_dir)?;
    let cells_skipped = suite.cells.len() - suite.n_ok();
    log(
        "info",
        "report",
        &format!("{reports_written} reports written, {cells_skipped} cells skipped"),
    );

    Ok(PipelineSummary {
        n_subscribers: matrix.n_rows(),
        n_descriptors: matrix.n_cols(),
        events_accepted: event_report.accepted,
        events_rejected: event_report.rejected,
        money_accepted: money_report.accepted,
        money_rejected: money_report.rejected,
        reports_written,
        cells_skipped,
    })
}

/// Runs `f` inside a worker pool of the given size; `None` keeps the
/// default machine parallelism.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match threads {
        None => f(),
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

/// Runs synth (or ingest) -> featurize -> experiment suite, writing all
/// artifacts under `out_dir`.
pub fn run_pipeline(
    config: &RunConfig,
    out_dir: &Path,
    log: Logger<'_>,
) -> Result<PipelineSummary> {
    with_threads(config.threads, || run_stages(config, out_dir, log))
}
