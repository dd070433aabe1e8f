//! Configuration-driven front end: experiment configs, the solve / eig /
//! rates / regularity / sweep commands, and their CSV/JSON outputs.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{Outcome, RunError, RunOptions, RunRecord};
