//! Scenario configuration and orchestration for the `ifd-lab` command.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, schema, ScenarioConfig};
pub use error::{CliError, ErrorReport};
pub use output::OutputDir;
pub use run::{comparable, run_scenario, RunOptions, RunOutcome};
