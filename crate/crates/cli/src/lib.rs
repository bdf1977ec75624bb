//! Command-line experiment runner for the transient impact game toolkit.
//!
//! A run reads one JSON config, dispatches to the solver for the requested
//! experiment and writes a JSON report plus CSV tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use run::{config_hash, run_experiment, write_outcome, Outcome, RunReport, SCHEMA_VERSION};
