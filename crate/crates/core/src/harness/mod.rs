//! Reproducible experiments, persistence and charts.

pub mod charts;
pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Experiment, RunConfig, VocabSizes};
pub use experiments::{derive_seed, experiment_e1, experiment_e2, experiment_e3, experiment_e4, run, verify_suite};
pub use report::{CsvTable, RunReport};
