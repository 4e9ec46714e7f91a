//! Experiment runner: configuration, the experiments themselves, and CSV/JSON output.

pub mod config;
pub mod emit;
pub mod experiments;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig};
pub use emit::{emit, Format, Report, Table, Value};
pub use experiments::run_experiment;
