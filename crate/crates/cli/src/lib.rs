//! Config-driven experiment runner for the `stochgame` library.
//!
//! A run reads one JSON [`config::ExperimentConfig`], executes its stages in
//! order and writes value-grid CSVs, certificate JSONs, `manifest.json` and
//! `summary.csv` into the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod runner;

pub use config::{ExperimentConfig, Precision};
pub use error::{CliError, ConfigIssue};
pub use runner::{
    exit_status, load, run_document, validate_document, Manifest, RunOptions, RunOutcome,
    SummaryRow,
};

/// Exit status for configuration, input and output errors.
pub const EXIT_USAGE: i32 = 2;
