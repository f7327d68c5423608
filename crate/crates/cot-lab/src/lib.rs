//! Scenario files, JSON/CSV reports and the `cot-lab` command line on top
//! of [`cot_lab_core`].

pub mod cli;
pub mod error;
pub mod report;
pub mod scenario_file;

pub use error::{CliError, Result};
