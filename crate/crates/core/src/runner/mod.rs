//! Experiment configuration, execution and output.

pub mod config;
pub mod run;

pub use config::{random_order, AblationFlags, ExperimentConfig, OUTPUT_ROOT_VAR};
pub use run::{checkpoint, initial_state, run_dir, run_dir_in, run_experiment, run_seed, Control, Progress, RunManifest, SeedRun, SeedStatus};
