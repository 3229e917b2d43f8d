//! Config-driven experiments, synthetic data and hyper-parameter grids.

pub mod config;
pub mod experiment;
pub mod grid;
pub mod synth;

pub use config::{build_pipeline, dataset_preset, DatasetPreset, EdaMode, ExperimentConfig, DATA_DIR_ENV};
pub use experiment::{
    evaluate_run, run_experiment, run_on_panel, write_outputs, HorizonResult, PreparedData, RunOutcome,
    RunReport,
};
pub use grid::{grid_search, select_by_validation, GridReport};
pub use synth::{synth_generate, SynthSpec};
