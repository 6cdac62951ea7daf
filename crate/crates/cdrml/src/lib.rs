//! Behavioral feature engineering and boosted-tree experiments over call
//! detail records.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! * [`data`] — typed CDR/MMTR/roster records, CSV ingestion, subscriber
//!   classification into voice-only / registered / P2P money users;
//! * [`grammar`] — the combinatorial feature-descriptor space with canonical
//!   names and usage/mobility/network categories;
//! * [`engine`] — evaluation of every descriptor for every subscriber,
//!   including contact-graph degree percentiles, into a dense matrix;
//! * [`gbm`] — gradient-boosted regression trees for binary classification
//!   with logistic loss, stratified cross-validation and permutation feature
//!   importance;
//! * [`experiment`] — per-stratum balanced sampling and the two-task
//!   experiment suite with CSV reports;
//! * [`synth`] — a seeded synthetic population generator with planted
//!   adoption effects, used to verify the pipeline end to end;
//! * [`pipeline`] — configuration plus the one-call orchestration used by
//!   the `cdrml` binary.
//!
//! The long-form guide lives in `book/`; its code snippets are compiled as
//! doc-tests through the `book` module.

pub mod calendar;
pub mod data;
pub mod engine;
mod error;
pub mod experiment;
pub mod gbm;
pub mod grammar;
pub mod pipeline;
mod seeds;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book;
