//! Experiment plumbing: configuration files, drivers, baseline comparison
//! and file output.

pub mod config;
pub mod exact;
pub mod output;
pub mod run;

pub use config::{Baseline, ExperimentConfig, HyperSource, Ic, ProblemSpec};
pub use output::Table;
pub use run::{compare, resolve, solve, write_comparison, write_hyperopt, write_run, ComparisonReport, MethodReport, RunOutput};
