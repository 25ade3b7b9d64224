//! Datasets, experiment configuration, metric files and the command line.

pub mod cli;
mod config;
mod dataset;
mod idx;
mod runner;

pub use config::{DatasetSpec, ExperimentConfig};
pub use dataset::{
    generate_blobs, generate_synthetic, load_idx, load_idx_dir, DatasetHandle, DatasetKind,
    SyntheticSpec,
};
pub use idx::{read_idx_pair, IdxArray};
pub use runner::{
    ablate, ablation_table, load_dataset, metrics_csv, run_experiment, run_in_memory, AblationArm,
    RunSummary, METRICS_VERSION_LINE,
};
