use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::train::{train, Model, StepMetrics, Strategy, TrainOutcome};

use super::config::{DatasetSpec, ExperimentConfig};
use super::dataset::{generate_blobs, load_idx_dir, DatasetHandle};

/// First line of every metrics file.
pub const METRICS_VERSION_LINE: &str = "# nm-sparse-kit metrics v1";

/// Version line, column header, one row per iteration.
pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let mut s = format!("{METRICS_VERSION_LINE}\n{}\n", StepMetrics::CSV_HEADER);
    for m in metrics {
        s.push_str(&m.to_csv_row());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub iterations: usize,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub mean_grad_gap: f64,
    pub mean_eligible_ratio: f64,
    pub search_seconds: f64,
}

impl RunSummary {
    fn from_outcome(label: String, o: &TrainOutcome) -> Self {
        Self {
            label,
            iterations: o.metrics.len(),
            train_accuracy: o.train_accuracy,
            test_accuracy: o.test_accuracy,
            mean_grad_gap: o.mean_grad_gap(),
            mean_eligible_ratio: o.mean_eligible_ratio(),
            search_seconds: o.search_seconds,
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let test = self
            .test_accuracy
            .map_or("na".to_string(), |a| format!("{a:.4}"));
        write!(
            f,
            "run={} iterations={} train_acc={:.4} test_acc={} mean_grad_gap={:.6} mean_eligible_ratio={:.4} search_seconds={:.6}",
            self.label,
            self.iterations,
            self.train_accuracy,
            test,
            self.mean_grad_gap,
            self.mean_eligible_ratio,
            self.search_seconds
        )
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<DatasetHandle> {
    match spec {
        DatasetSpec::Synthetic(s) => generate_blobs(s),
        DatasetSpec::Idx(dir) => load_idx_dir(dir),
    }
}

fn label(cfg: &ExperimentConfig) -> String {
    format!("{}-{}", cfg.strategy, cfg.pattern)
}

/// Trains without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig, data: &DatasetHandle) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.model_spec(data.input_dim(), data.num_classes);
    let model = Model::init(&spec, cfg.train.seed)?;
    train(model, &data.train, data.test.as_ref(), &cfg.train)
}

/// Trains and, when `cfg.out` is set, writes `metrics.csv`, `summary.txt`,
/// `config.txt` and per-layer weight, mask and permutation files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let data = load_dataset(&cfg.dataset)?;
    let outcome = run_in_memory(cfg, &data)?;
    let summary = RunSummary::from_outcome(label(cfg), &outcome);
    if let Some(dir) = &cfg.out {
        write_artifacts(dir, cfg, &outcome, &summary)?;
    }
    Ok(summary)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    o: &TrainOutcome,
    summary: &RunSummary,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("metrics.csv"), &metrics_csv(&o.metrics))?;
    write(&dir.join("summary.txt"), &format!("{summary}\n"))?;
    write(&dir.join("config.txt"), &cfg.to_text())?;
    for (l, (layer, masked)) in o
        .model
        .layers()
        .iter()
        .zip(&o.final_masked_weights)
        .enumerate()
    {
        write(
            &dir.join(format!("layer{l}_weights.txt")),
            &masked.to_text(),
        )?;
        if let Some(mask) = layer.forward_mask() {
            write(
                &dir.join(format!("layer{l}_forward_mask.txt")),
                &mask.to_text(),
            )?;
        }
        if layer.strategy() == Strategy::BiMask {
            if let Some(mask) = layer.backward_mask() {
                write(
                    &dir.join(format!("layer{l}_backward_mask.txt")),
                    &mask.to_text(),
                )?;
            }
            write(
                &dir.join(format!("layer{l}_permutation.txt")),
                &format!("{}\n", layer.permutation()),
            )?;
        }
    }
    Ok(())
}

/// The three ablation arms, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationArm {
    /// Forward mask only, exact backward.
    Baseline,
    /// Bi-directional masks with the identity permutation.
    BackwardMask,
    /// Bi-directional masks with permutation updates.
    PermutationUpdating,
}

impl AblationArm {
    pub const ALL: [AblationArm; 3] = [
        Self::Baseline,
        Self::BackwardMask,
        Self::PermutationUpdating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::BackwardMask => "+backward-mask",
            Self::PermutationUpdating => "+permutation",
        }
    }

    pub fn configure(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.out = None;
        match self {
            Self::Baseline => cfg.strategy = Strategy::Vanilla,
            Self::BackwardMask => {
                cfg.strategy = Strategy::BiMask;
                cfg.train.permutation_updates = false;
            }
            Self::PermutationUpdating => {
                cfg.strategy = Strategy::BiMask;
                cfg.train.permutation_updates = true;
            }
        }
        cfg
    }
}

/// Runs the three arms on one dataset and seed.
pub fn ablate(base: &ExperimentConfig) -> Result<Vec<(AblationArm, RunSummary)>> {
    let data = load_dataset(&base.dataset)?;
    AblationArm::ALL
        .iter()
        .map(|&arm| {
            let cfg = arm.configure(base);
            let outcome = run_in_memory(&cfg, &data)?;
            Ok((
                arm,
                RunSummary::from_outcome(arm.name().to_string(), &outcome),
            ))
        })
        .collect()
}

pub fn ablation_table(rows: &[(AblationArm, RunSummary)]) -> String {
    let mut s = format!(
        "{:<16} {:>9} {:>9} {:>13} {:>13} {:>10}\n",
        "arm", "train_acc", "test_acc", "mean_gap", "eligible", "search_s"
    );
    for (arm, r) in rows {
        let test = r
            .test_accuracy
            .map_or("na".to_string(), |a| format!("{a:.4}"));
        s.push_str(&format!(
            "{:<16} {:>9.4} {:>9} {:>13.6} {:>13.4} {:>10.4}\n",
            arm.name(),
            r.train_accuracy,
            test,
            r.mean_grad_gap,
            r.mean_eligible_ratio,
            r.search_seconds
        ));
    }
    s
}
