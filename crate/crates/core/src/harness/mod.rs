//! Experiment configuration, orchestration and reporting.

pub mod artifacts;
pub mod config;
pub mod report;
pub mod run;
pub mod spectra;
pub mod sweep;

pub use config::{parse_config, ExperimentConfig, Mode};
pub use report::{compare_bounds, success_rate, BoundReport};
pub use run::{run_experiment, run_seed, RunSummary, SeedSummary};
pub use spectra::{spectra, SpectraReport};
pub use sweep::{sweep, SweepCell};
