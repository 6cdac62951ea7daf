//! Doc-test bindings for the guide in `book/`: every fenced Rust block in
//! the chapters compiles and runs under `cargo test --doc`, keeping the
//! book and the library in lockstep.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/data-model.md")]
mod data_model {}

#[doc = include_str!("../../../book/src/feature-grammar.md")]
mod feature_grammar {}

#[doc = include_str!("../../../book/src/feature-engine.md")]
mod feature_engine {}

#[doc = include_str!("../../../book/src/boosted-trees.md")]
mod boosted_trees {}

#[doc = include_str!("../../../book/src/experiments.md")]
mod experiments {}

#[doc = include_str!("../../../book/src/synthetic-data.md")]
mod synthetic_data {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
