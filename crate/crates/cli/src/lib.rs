//! Configuration parsing and experiment dispatch for the `repligame` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, Experiment, ScenarioConfig};
pub use run::{run_experiment, Outcome, RunError};
