//! Configuration, runners and reports for the `sojourn` command-line tool.

pub mod accept;
pub mod config;
pub mod error;
pub mod output;
pub mod quantum_run;
pub mod rf;
pub mod runner;

pub use error::{HarnessError, HarnessResult};
