//! Reproducible scenario runs over the `hjcell-core` solvers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod config;
pub mod run;

pub use compare::{compare_runs, CompareError, DiffReport};
pub use config::{ConfigError, ScenarioConfig, Task};
pub use run::{run_scenario, Manifest, RunOptions};
