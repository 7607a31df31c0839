//! Experiment runner: configuration, the daily loop, metrics and outputs.

pub mod config;
pub mod episode;
pub mod experiments;
pub mod metrics;
pub mod output;

pub use config::{parse_config, preset, ConfigError, Experiment, GridSpec, RunConfig};
pub use episode::{run_episode, run_experiment, DayRecord, HarnessError, RunResult, RunTrace, Truth};
pub use experiments::{random_settings, run_full, sweep};
pub use metrics::{efficiency_index, pseudo_regret, summarize, MeanCi, Series};
