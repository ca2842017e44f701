//! Command-line front end: TOML run configs, task pipelines, JSON reports,
//! CSV tables and SVG trajectory plots.

pub mod config;
pub mod report;
pub mod svg;
pub mod tasks;

pub use config::{parse_config, parse_config_for, ConfigError, RunConfig};
pub use report::{Metric, RunReport};
pub use tasks::{run_task, Task};
