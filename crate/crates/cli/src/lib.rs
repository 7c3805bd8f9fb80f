//! Library side of the `frodest` command-line tool, so that the commands can be
//! driven from tests without spawning processes.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_analyze, cmd_estimate, cmd_repro_eeg, cmd_simulate, eeg_run, EegRun, EstimateOptions, Manifest,
};
pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::CliError;
