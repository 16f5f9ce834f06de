//! Discrete-event scheduler, configuration, trial driver and output files.

pub mod config;
pub mod event;
pub mod experiment;
pub mod output;
pub mod trial;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use event::{Destination, Event, EventKind, EventQueue, NodeId, SimTime};
pub use experiment::{run_bootstrap, run_experiment, BootstrapRound, ExperimentReport};
pub use output::{
    parse_density_file, parse_summary_file, write_csv, write_density, write_outputs,
    write_summary, CsvRow, TrialOutput,
};
pub use trial::{run_trial, run_trial_traced, GodCounts, SimError, TrialResult};
