//! Configuration, experiment dispatch, result records and comparisons
//! behind the `hyperzero` command line.

pub mod compare;
pub mod config;
pub mod experiments;
pub mod record;

pub use compare::{compare, CompareError, ComparisonReport, Prediction};
pub use config::{ConfigError, ExperimentConfig, ExperimentKind, FieldError};
pub use experiments::{roots_benchmark, run, RootsBenchReport};
pub use record::{Cell, ResultRecord, PASS_SIGMAS};
