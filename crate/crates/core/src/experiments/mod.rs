//! Orchestration of the convergence and training/spectra studies.

mod config;
mod convergence;
mod manifest;
mod reproduce;
mod training;

pub use config::{DataConfig, DataSource, ExperimentConfig, LoadedData, DATA_DIR_ENV};
pub use convergence::{hidden_masks, run_convergence_study, ConvergenceStudy, MethodCurves, CONVERGENCE_HEADER};
pub use manifest::{CellRecord, Manifest, MANIFEST_FILE};
pub use reproduce::{preset, reproduce, Artifacts, Figure, Scale};
pub use training::{
    run_training_study, train, TrainTrace, TrainingStudy, DIVERGENCE_LIMIT, RUNS_HEADER, SUMMARY_HEADER, TRACES_HEADER,
};

/// `"<tag>_<base>"`, or `base` when the config has no tag.
pub(crate) fn output_name(cfg: &ExperimentConfig, base: &str) -> String {
    match &cfg.tag {
        Some(tag) => format!("{tag}_{base}"),
        None => base.to_string(),
    }
}
