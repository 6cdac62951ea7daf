//! `cdrml` — command-line front end for the feature-engineering and
//! experiment pipeline.
//!
//! Subcommands mirror the pipeline stages: `synth` writes a seeded synthetic
//! population, `enumerate` dumps the descriptor set, `featurize` turns logs
//! into a feature matrix, `sample` draws a balanced subset, `train` fits a
//! boosted-tree model, `report` runs the experiment suite, and `pipeline`
//! chains everything from one JSON config. Log lines go to stderr as
//! `level<TAB>stage<TAB>message`; failures exit nonzero with a single such
//! line at level `error`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdrml::calendar::Calendar;
use cdrml::data::{ingest_events, ingest_money, ingest_roster, Stratum};
use cdrml::engine::{build_matrix, FeatureMatrix};
use cdrml::experiment::{balanced_sample, run_suite, ExperimentSpec, Task};
use cdrml::gbm::{cross_validate, fit, GbmParams, Rows};
use cdrml::grammar::{canonical_name, category_of, enumerate_descriptors};
use cdrml::pipeline::{run_pipeline, with_threads, RunConfig};
use cdrml::synth::{generate, PopulationConfig};

#[derive(Parser)]
#[command(
    name = "cdrml",
    about = "Behavioral feature engineering and boosted-tree experiments over call detail records",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GbmArgs {
    /// Boosting rounds.
    #[arg(long, default_value_t = GbmParams::default().n_trees)]
    trees: usize,
    /// Learning rate in (0, 1].
    #[arg(long, default_value_t = GbmParams::default().shrinkage)]
    shrinkage: f64,
    /// Maximum tree depth.
    #[arg(long, default_value_t = GbmParams::default().max_depth)]
    max_depth: usize,
    /// Minimum rows per leaf.
    #[arg(long, default_value_t = GbmParams::default().min_leaf)]
    min_leaf: usize,
}

impl GbmArgs {
    fn params(&self) -> GbmParams {
        GbmParams {
            n_trees: self.trees,
            shrinkage: self.shrinkage,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
        }
    }
}

#[derive(Args)]
struct CalendarArgs {
    /// Fixed UTC offset applied before day bucketing, in minutes.
    #[arg(long, default_value_t = 0)]
    utc_offset_minutes: i32,
    /// Weekend day names, comma separated.
    #[arg(long, default_value = "SAT,SUN")]
    weekend: String,
}

impl CalendarArgs {
    fn calendar(&self) -> cdrml::Result<Calendar> {
        Calendar::with_weekend_names(self.utc_offset_minutes, &self.weekend)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population: cdr.csv, mmtr.csv, roster.csv.
    Synth {
        /// Generator config JSON; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the full descriptor set as `name,category` CSV.
    Enumerate {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every descriptor for every subscriber into features.csv.
    Featurize {
        /// Call-detail CSV path.
        #[arg(long)]
        cdr: PathBuf,
        /// Money-transaction CSV path.
        #[arg(long)]
        mmtr: PathBuf,
        /// Roster CSV path.
        #[arg(long)]
        roster: PathBuf,
        /// Output feature matrix path.
        #[arg(long)]
        out: PathBuf,
        /// Fail on the first malformed row instead of skipping it.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        calendar: CalendarArgs,
        /// Worker threads (default: machine parallelism).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Draw a balanced subset for one task, writing `subscriber_id,label`.
    Sample {
        /// Feature matrix path.
        #[arg(long)]
        features: PathBuf,
        /// Task: `adoption` or `p2p`.
        #[arg(long)]
        task: String,
        /// Restrict to one stratum (male/female/urban/rural/rich/poor).
        #[arg(long)]
        stratum: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Minimum rows per class.
        #[arg(long, default_value_t = 20)]
        min_n: usize,
        /// Output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a boosted-tree model and write it as JSON.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Task: `adoption` or `p2p`.
        #[arg(long)]
        task: String,
        /// Restrict to one stratum.
        #[arg(long)]
        stratum: Option<String>,
        /// Balance classes before fitting.
        #[arg(long)]
        balance: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Minimum rows per class when balancing.
        #[arg(long, default_value_t = 20)]
        min_n: usize,
        #[command(flatten)]
        gbm: GbmArgs,
        /// Model output path.
        #[arg(long)]
        out: PathBuf,
        /// Also report k-fold cross-validated accuracy.
        #[arg(long)]
        cv: Option<usize>,
    },
    /// Run the full experiment suite and write the report CSVs.
    Report {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory for the report CSVs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 20)]
        min_n: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[command(flatten)]
        gbm: GbmArgs,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Chain synth (or ingest), featurize and the report suite.
    Pipeline {
        /// Run config JSON; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn log(level: &str, stage: &str, msg: &str) {
    eprintln!("{level}\t{stage}\t{msg}");
}

fn parse_stratum(s: &Option<String>) -> cdrml::Result<Option<Stratum>> {
    s.as_deref().map(Stratum::from_token).transpose()
}

fn load_matrix(path: &std::path::Path, stage: &str) -> cdrml::Result<FeatureMatrix> {
    log("info", stage, &format!("reading {}", path.display()));
    FeatureMatrix::read_csv(path)
}

fn run(command: Command) -> Result<(), (&'static str, cdrml::Error)> {
    match command {
        Command::Synth { config, out, seed } => {
            let stage = "synth";
            let fail = |e| (stage, e);
            let mut config = match config {
                Some(path) => PopulationConfig::load(&path).map_err(fail)?,
                None => PopulationConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let population = generate(&config).map_err(fail)?;
            fs::create_dir_all(&out).map_err(|e| (stage, cdrml::Error::Io(e)))?;
            cdrml::data::write_events_csv(&out.join("cdr.csv"), &population.events)
                .map_err(fail)?;
            cdrml::data::write_money_csv(&out.join("mmtr.csv"), &population.money).map_err(fail)?;
            cdrml::data::write_roster_csv(&out.join("roster.csv"), &population.roster)
                .map_err(fail)?;
            fs::write(out.join("synth_config.json"), config.to_json())
                .map_err(|e| (stage, cdrml::Error::Io(e)))?;
            log(
                "info",
                stage,
                &format!(
                    "wrote {} events, {} money rows, {} subscribers to {}",
                    population.events.len(),
                    population.money.len(),
                    population.roster.len(),
                    out.display()
                ),
            );
            Ok(())
        }
        Command::Enumerate { out } => {
            let stage = "enumerate";
            let mut text = String::from("name,category\n");
            for d in enumerate_descriptors() {
                text.push_str(&canonical_name(&d));
                text.push(',');
                text.push_str(category_of(&d).token());
                text.push('\n');
            }
            match out {
                Some(path) => fs::write(&path, text).map_err(|e| (stage, cdrml::Error::Io(e)))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Featurize {
            cdr,
            mmtr,
            roster,
            out,
            strict,
            calendar,
            threads,
        } => {
            let stage = "featurize";
            let fail = |e| (stage, e);
            let cal = calendar.calendar().map_err(fail)?;
            let (events, event_report) = ingest_events(&cdr, strict).map_err(fail)?;
            let (money, money_report) = ingest_money(&mmtr, strict).map_err(fail)?;
            let (roster, roster_report) = ingest_roster(&roster, strict).map_err(fail)?;
            log(
                "info",
                stage,
                &format!(
                    "ingested {} events ({} rejected), {} money rows ({} rejected), {} subscribers ({} rejected)",
                    event_report.accepted,
                    event_report.rejected,
                    money_report.accepted,
                    money_report.rejected,
                    roster_report.accepted,
                    roster_report.rejected
                ),
            );
            let descriptors = enumerate_descriptors();
            let (matrix, build) = with_threads(threads, || {
                build_matrix(&events, &money, &roster, &descriptors, &cal)
            })
            .map_err(fail)?;
            if build.unrostered_events > 0 || build.unrostered_money > 0 {
                log(
                    "info",
                    stage,
                    &format!(
                        "{} events and {} money rows reference off-roster subscribers",
                        build.unrostered_events, build.unrostered_money
                    ),
                );
            }
            matrix.write_csv(&out).map_err(fail)?;
            log(
                "info",
                stage,
                &format!(
                    "wrote {} rows x {} columns to {}",
                    matrix.n_rows(),
                    matrix.n_cols(),
                    out.display()
                ),
            );
            Ok(())
        }
        Command::Sample {
            features,
            task,
            stratum,
            seed,
            min_n,
            out,
        } => {
            let stage = "sample";
            let fail = |e| (stage, e);
            let matrix = load_matrix(&features, stage).map_err(fail)?;
            let spec = ExperimentSpec {
                min_n,
                ..ExperimentSpec::new(
                    Task::from_token(&task).map_err(fail)?,
                    parse_stratum(&stratum).map_err(fail)?,
                    seed,
                )
            };
            let (rows, labels) = balanced_sample(&matrix, &spec).map_err(fail)?;
            let mut text = String::from("subscriber_id,label\n");
            for (&row, &y) in rows.iter().zip(&labels) {
                text.push_str(&matrix.subscriber_ids[row as usize]);
                text.push(',');
                text.push_str(if y == 1 { "1" } else { "0" });
                text.push('\n');
            }
            fs::write(&out, text).map_err(|e| (stage, cdrml::Error::Io(e)))?;
            log(
                "info",
                stage,
                &format!("wrote {} balanced rows to {}", rows.len(), out.display()),
            );
            Ok(())
        }
        Command::Train {
            features,
            task,
            stratum,
            balance,
            seed,
            min_n,
            gbm,
            out,
            cv,
        } => {
            let stage = "train";
            let fail = |e| (stage, e);
            let matrix = load_matrix(&features, stage).map_err(fail)?;
            let task = Task::from_token(&task).map_err(fail)?;
            let spec = ExperimentSpec {
                min_n,
                gbm: gbm.params(),
                ..ExperimentSpec::new(task, parse_stratum(&stratum).map_err(fail)?, seed)
            };
            let (rows, labels) = if balance {
                balanced_sample(&matrix, &spec).map_err(fail)?
            } else {
                let mut rows = Vec::new();
                let mut labels = Vec::new();
                for i in 0..matrix.n_rows() {
                    if let Some(st) = spec.stratum {
                        if matrix.stratum(i, st.axis()) != Some(st) {
                            continue;
                        }
                    }
                    if let Some(y) = task.label(matrix.classes[i]) {
                        rows.push(i as u32);
                        labels.push(y);
                    }
                }
                (rows, labels)
            };
            let data = Rows::new(matrix.values(), matrix.n_cols()).map_err(fail)?;
            let model = fit(data, &rows, &labels, &spec.gbm).map_err(fail)?;
            fs::write(&out, model.to_json()).map_err(|e| (stage, cdrml::Error::Io(e)))?;
            log(
                "info",
                stage,
                &format!(
                    "fit {} trees on {} rows, wrote {}",
                    model.trees.len(),
                    rows.len(),
                    out.display()
                ),
            );
            if let Some(k) = cv {
                let result =
                    cross_validate(data, &rows, &labels, k, seed, &spec.gbm).map_err(fail)?;
                println!("fold,accuracy");
                for (i, acc) in result.fold_accuracy.iter().enumerate() {
                    println!("{i},{acc}");
                }
                println!("mean,{}", result.mean);
                println!("std,{}", result.std);
            }
            Ok(())
        }
        Command::Report {
            features,
            seed,
            out,
            folds,
            min_n,
            repeats,
            gbm,
            threads,
        } => {
            let stage = "report";
            let fail = |e| (stage, e);
            let matrix = load_matrix(&features, stage).map_err(fail)?;
            let suite = with_threads(threads, || {
                Ok(run_suite(
                    &matrix,
                    seed,
                    gbm.params(),
                    folds,
                    min_n,
                    repeats,
                ))
            })
            .map_err(fail)?;
            let written = suite.write_reports(&out).map_err(fail)?;
            log(
                "info",
                stage,
                &format!(
                    "{written} reports written, {} cells skipped, summary at {}",
                    suite.cells.len() - suite.n_ok(),
                    out.join("accuracy_summary.csv").display()
                ),
            );
            Ok(())
        }
        Command::Pipeline {
            config,
            out,
            seed,
            threads,
        } => {
            let stage = "pipeline";
            let fail = |e| (stage, e);
            let mut config = match config {
                Some(path) => RunConfig::load(&path).map_err(fail)?,
                None => RunConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(threads) = threads {
                config.threads = Some(threads);
            }
            let summary = run_pipeline(&config, &out, &log).map_err(fail)?;
            log(
                "info",
                stage,
                &format!(
                    "done: {} subscribers x {} descriptors, {} reports, {} cells skipped",
                    summary.n_subscribers,
                    summary.n_descriptors,
                    summary.reports_written,
                    summary.cells_skipped
                ),
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, err)) => {
            log("error", stage, &err.to_string());
            ExitCode::FAILURE
        }
    }
}
