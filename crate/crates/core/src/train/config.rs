use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mask::{BinarizationCriterion, TransposableMethod};

/// Warmup followed by cosine annealing to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    /// Epochs of linear increase from 0 to `peak_lr`.
    pub warmup_epochs: usize,
    pub peak_lr: f64,
}

impl LrSchedule {
    /// Learning rate for the 0-based global `step`.
    pub fn at(&self, step: usize, steps_per_epoch: usize, epochs: usize) -> f64 {
        let total = (epochs * steps_per_epoch).max(1);
        let warm = (self.warmup_epochs * steps_per_epoch).min(total);
        if step < warm {
            return self.peak_lr * (step + 1) as f64 / warm as f64;
        }
        let span = (total - warm).max(1) as f64;
        let progress = ((step - warm) as f64 / span).min(1.0);
        0.5 * self.peak_lr * (1.0 + (PI * progress).cos())
    }
}

/// Schedule constants of the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Iterations between permutation searches.
    pub delta_t: usize,
    /// Random permutation candidates per search.
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Backward-mask statistic for the bi-directional strategy.
    pub criterion: BinarizationCriterion,
    /// Mask construction for the transposable strategy.
    pub transposable_method: TransposableMethod,
    /// When false, the bi-directional strategy keeps the identity permutation.
    pub permutation_updates: bool,
}

impl Default for TrainConfig {
    /// Reference schedule: ΔT = K = 100, batch 256, 5 warmup
    /// epochs up to 0.1, momentum 0.9, weight decay 1e-3, 300 epochs.
    fn default() -> Self {
        Self {
            delta_t: 100,
            k: 100,
            epochs: 300,
            batch_size: 256,
            lr: LrSchedule {
                warmup_epochs: 5,
                peak_lr: 0.1,
            },
            momentum: 0.9,
            weight_decay: 1e-3,
            seed: 0,
            criterion: BinarizationCriterion::WeightMagnitude,
            transposable_method: TransposableMethod::TwoApprox,
            permutation_updates: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.delta_t == 0 {
            return fail("delta_t must be at least 1");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive");
        }
        if !(self.lr.peak_lr > 0.0 && self.lr.peak_lr.is_finite()) {
            return fail("peak_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        Ok(())
    }

    /// Whether the permutation search runs at 1-based `iteration`.
    pub fn is_search_iteration(&self, iteration: usize) -> bool {
        self.permutation_updates && iteration > 0 && iteration % self.delta_t == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_defaults() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.delta_t, c.k, c.batch_size, c.lr.warmup_epochs),
            (100, 100, 256, 5)
        );
        assert_eq!((c.lr.peak_lr, c.momentum, c.weight_decay), (0.1, 0.9, 1e-3));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn search_schedule() {
        let c = TrainConfig::default();
        assert!(c.is_search_iteration(100));
        assert!(!c.is_search_iteration(101));
        assert!(!c.is_search_iteration(0));
        let off = TrainConfig {
            permutation_updates: false,
            ..c
        };
        assert!(!off.is_search_iteration(100));
    }

    #[test]
    fn warmup_then_cosine() {
        let s = LrSchedule {
            warmup_epochs: 1,
            peak_lr: 0.1,
        };
        assert!((s.at(0, 10, 5) - 0.01).abs() < 1e-15);
        assert!((s.at(9, 10, 5) - 0.1).abs() < 1e-15);
        assert!((s.at(10, 10, 5) - 0.1).abs() < 1e-15);
        assert!((s.at(30, 10, 5) - 0.05).abs() < 1e-12);
        assert!(s.at(49, 10, 5) < 0.001);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            TrainConfig {
                delta_t: 0,
                ..Default::default()
            },
            TrainConfig {
                k: 0,
                ..Default::default()
            },
            TrainConfig {
                lr: LrSchedule {
                    warmup_epochs: 0,
                    peak_lr: 0.0,
                },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
