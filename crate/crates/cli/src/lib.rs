//! Scenario runner for the regularframe laboratory.
//!
//! The library half of the `regularframe` binary: scenario schemas
//! ([`scenario`]), check/report plumbing ([`report`]), the per-kind
//! pipelines ([`run`]), and directory suites ([`suite`]).

use thiserror::Error;

pub mod report;
pub mod run;
pub mod scenario;
pub mod suite;

pub use report::{CheckRecord, Report, SuiteReport, Table};
pub use run::run_scenario;
pub use scenario::{parse_scenario, Scenario};
pub use suite::{load_and_run, run_suite, suite_exit_code};

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input: parse failures, missing fields, bad tolerances.
    #[error("schema: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(String),
    /// The pipeline itself could not run on valid-looking input.
    #[error("run: {0}")]
    Run(String),
}
