//! Flat `key = value` experiment files. `#` starts a comment; unknown keys
//! are errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mask::{BinarizationCriterion, TransposableMethod};
use crate::tensor::NmPattern;
use crate::train::{LrSchedule, ModelSpec, Strategy, TrainConfig};

use super::dataset::SyntheticSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    /// Directory holding `train-*` and optionally `t10k-*` IDX files.
    Idx(PathBuf),
}

impl DatasetSpec {
    fn describe(&self) -> String {
        match self {
            DatasetSpec::Synthetic(_) => "synthetic".into(),
            DatasetSpec::Idx(dir) => format!("idx:{}", dir.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub strategy: Strategy,
    pub pattern: NmPattern,
    pub hidden: Vec<usize>,
    pub dense_head: bool,
    pub dataset: DatasetSpec,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// A desk-scale bi-directional 2:4 run on synthetic blobs.
    fn default() -> Self {
        Self {
            train: TrainConfig {
                delta_t: 20,
                k: 100,
                epochs: 20,
                batch_size: 32,
                lr: LrSchedule {
                    warmup_epochs: 2,
                    peak_lr: 0.05,
                },
                momentum: 0.9,
                weight_decay: 1e-4,
                seed: 0,
                criterion: BinarizationCriterion::WeightMagnitude,
                transposable_method: TransposableMethod::TwoApprox,
                permutation_updates: true,
            },
            strategy: Strategy::BiMask,
            pattern: NmPattern::new(2, 4).expect("valid pattern"),
            hidden: vec![64],
            dense_head: false,
            dataset: DatasetSpec::Synthetic(SyntheticSpec::default()),
            out: None,
        }
    }
}

fn method_name(m: TransposableMethod) -> &'static str {
    match m {
        TransposableMethod::Exact => "exact",
        TransposableMethod::TwoApprox => "approx",
        TransposableMethod::Flow => "flow",
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Parse {
        line,
        message: format!("{key}: {e}"),
    })
}

impl ExperimentConfig {
    /// Layer shapes implied by the dataset (synthetic only) and `hidden`.
    pub fn model_spec(&self, input_dim: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            input_dim,
            hidden: self.hidden.clone(),
            classes,
            strategy: self.strategy,
            pattern: self.pattern,
            dense_head: self.dense_head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be positive".into(),
            ));
        }
        if let DatasetSpec::Synthetic(s) = &self.dataset {
            let spec = self.model_spec(s.dim, s.classes);
            let dims = spec.layer_dims();
            let last = dims.len() - 1;
            for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
                let strategy = if l == last && self.dense_head {
                    Strategy::Dense
                } else {
                    self.strategy
                };
                let ctx = |e: Error| {
                    Error::InvalidArgument(format!("layer {l} ({fan_out}x{fan_in}): {e}"))
                };
                match strategy {
                    Strategy::Dense => {}
                    Strategy::Vanilla => self
                        .pattern
                        .check_divides("layer input dim", fan_in)
                        .map_err(ctx)?,
                    Strategy::Transposable | Strategy::BiMask => {
                        self.pattern
                            .check_divides("layer input dim", fan_in)
                            .map_err(ctx)?;
                        self.pattern
                            .check_divides("layer output dim", fan_out)
                            .map_err(ctx)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("strategy", self.strategy.to_string());
        kv("pattern", self.pattern.to_string());
        kv("criterion", t.criterion.name().into());
        kv(
            "transposable_method",
            method_name(t.transposable_method).into(),
        );
        kv("permutation_updates", t.permutation_updates.to_string());
        kv("epochs", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("warmup_epochs", t.lr.warmup_epochs.to_string());
        kv("peak_lr", format!("{:?}", t.lr.peak_lr));
        kv("momentum", format!("{:?}", t.momentum));
        kv("weight_decay", format!("{:?}", t.weight_decay));
        kv("delta_t", t.delta_t.to_string());
        kv("k", t.k.to_string());
        kv("seed", t.seed.to_string());
        kv(
            "hidden",
            self.hidden
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("dense_head", self.dense_head.to_string());
        kv("dataset", self.dataset.describe());
        if let DatasetSpec::Synthetic(d) = &self.dataset {
            kv("synthetic_classes", d.classes.to_string());
            kv("synthetic_dim", d.dim.to_string());
            kv("synthetic_per_class", d.per_class.to_string());
            kv("synthetic_test_per_class", d.test_per_class.to_string());
            kv("synthetic_spread", format!("{:?}", d.spread));
            kv("synthetic_informative", d.informative.to_string());
            kv("synthetic_seed", d.seed.to_string());
        }
        if let Some(out) = &self.out {
            kv("out", out.display().to_string());
        }
        s
    }

    /// Parses a file on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::default().with_text(text)
    }

    /// Applies the keys in `text` on top of `self`.
    pub fn with_text(mut self, text: &str) -> Result<Self> {
        let mut synthetic = match &self.dataset {
            DatasetSpec::Synthetic(s) => s.clone(),
            DatasetSpec::Idx(_) => SyntheticSpec::default(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let t = &mut self.train;
            match key {
                "strategy" => self.strategy = parse_value(key, value, line)?,
                "pattern" => self.pattern = parse_value(key, value, line)?,
                "criterion" => {
                    t.criterion =
                        BinarizationCriterion::parse(value, 0).map_err(|e| Error::Parse {
                            line,
                            message: e.to_string(),
                        })?
                }
                "transposable_method" => t.transposable_method = parse_value(key, value, line)?,
                "permutation_updates" => t.permutation_updates = parse_value(key, value, line)?,
                "epochs" => t.epochs = parse_value(key, value, line)?,
                "batch_size" => t.batch_size = parse_value(key, value, line)?,
                "warmup_epochs" => t.lr.warmup_epochs = parse_value(key, value, line)?,
                "peak_lr" => t.lr.peak_lr = parse_value(key, value, line)?,
                "momentum" => t.momentum = parse_value(key, value, line)?,
                "weight_decay" => t.weight_decay = parse_value(key, value, line)?,
                "delta_t" => t.delta_t = parse_value(key, value, line)?,
                "k" => t.k = parse_value(key, value, line)?,
                "seed" => t.seed = parse_value(key, value, line)?,
                "hidden" => {
                    self.hidden = if value.is_empty() {
                        Vec::new()
                    } else {
                        value
                            .split(',')
                            .map(|w| parse_value(key, w.trim(), line))
                            .collect::<Result<_>>()?
                    }
                }
                "dense_head" => self.dense_head = parse_value(key, value, line)?,
                "dataset" => {
                    self.dataset = match value.split_once(':') {
                        _ if value == "synthetic" => DatasetSpec::Synthetic(synthetic.clone()),
                        Some(("idx", dir)) if !dir.is_empty() => {
                            DatasetSpec::Idx(PathBuf::from(dir))
                        }
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: format!(
                                    "dataset must be `synthetic` or `idx:<dir>`, got {value:?}"
                                ),
                            })
                        }
                    }
                }
                "synthetic_classes" => synthetic.classes = parse_value(key, value, line)?,
                "synthetic_dim" => synthetic.dim = parse_value(key, value, line)?,
                "synthetic_per_class" => synthetic.per_class = parse_value(key, value, line)?,
                "synthetic_test_per_class" => {
                    synthetic.test_per_class = parse_value(key, value, line)?
                }
                "synthetic_spread" => synthetic.spread = parse_value(key, value, line)?,
                "synthetic_informative" => synthetic.informative = parse_value(key, value, line)?,
                "synthetic_seed" => synthetic.seed = parse_value(key, value, line)?,
                "out" => self.out = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        if let DatasetSpec::Synthetic(s) = &mut self.dataset {
            *s = synthetic;
        }
        Ok(self)
    }
}
