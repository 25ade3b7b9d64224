use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::config::TrainConfig;
use super::layer::{backward_exact, input_gradient, mix_seed, weight_gradient, Strategy};
use super::model::{softmax_cross_entropy, Model, Split};

/// Per-iteration record of the training loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// 1-based.
    pub iteration: usize,
    /// 0-based.
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// `‖ḡ − g‖ / ‖g‖` pooled over the bi-directional layers; 0 otherwise.
    pub grad_gap_l2: f64,
    /// Eligible column blocks over all blocks, pooled over sparse layers.
    pub eligible_block_ratio: f64,
    pub mask_flip_count: usize,
    pub searched: bool,
}

impl StepMetrics {
    pub const CSV_HEADER: &'static str =
        "iteration,epoch,lr,loss,grad_gap_l2,eligible_block_ratio,mask_flip_count,searched";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            self.iteration,
            self.epoch,
            self.lr,
            self.loss,
            self.grad_gap_l2,
            self.eligible_block_ratio,
            self.mask_flip_count,
            u8::from(self.searched)
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<StepMetrics>,
    /// `mask ⊙ w` per layer after the last update's masks are refreshed.
    pub final_masked_weights: Vec<Matrix>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Wall time spent in permutation search.
    pub search_seconds: f64,
}

impl TrainOutcome {
    pub fn mean_grad_gap(&self) -> f64 {
        mean(self.metrics.iter().map(|m| m.grad_gap_l2))
    }

    pub fn mean_eligible_ratio(&self) -> f64 {
        mean(self.metrics.iter().map(|m| m.eligible_block_ratio))
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Number of mini-batches per epoch, counting a partial last batch.
pub fn batches_per_epoch(examples: usize, batch_size: usize) -> usize {
    examples.div_ceil(batch_size)
}

/// Runs `epochs × batches` iterations of masked SGD.
///
/// Each iteration refreshes the masks, runs the sparse forward pass, sends
/// the input gradient back through each layer's strategy, and applies SGD
/// with momentum to the dense weights through the straight-through
/// estimator. Deterministic for a given `config.seed`.
pub fn train(
    mut model: Model,
    data: &Split,
    test: Option<&Split>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let (metrics, search_seconds) = train_with(&mut model, data, config, |_| {})?;
    let settle = TrainConfig {
        permutation_updates: false,
        ..config.clone()
    };
    let after = metrics.len() + 1;
    for layer in model.layers_mut() {
        layer.refresh_masks(after, &settle, config.criterion)?;
    }
    Ok(TrainOutcome {
        final_masked_weights: model.masked_weights(),
        train_accuracy: model.accuracy(data)?,
        test_accuracy: test.map(|t| model.accuracy(t)).transpose()?,
        model,
        metrics,
        search_seconds,
    })
}

/// [`train`] with a callback per iteration, leaving the model in place.
pub fn train_with(
    model: &mut Model,
    data: &Split,
    config: &TrainConfig,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<(Vec<StepMetrics>, f64)> {
    config.validate()?;
    if data.dim() != model.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "dataset dimension {} does not match model input {}",
            data.dim(),
            model.input_dim()
        )));
    }
    if let Some(&bad) = data.labels().iter().find(|&&y| y >= model.output_dim()) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} outputs",
            model.output_dim()
        )));
    }

    let per_epoch = batches_per_epoch(data.len(), config.batch_size);
    let mut velocity: Vec<(Matrix, Vec<f64>)> = model
        .layers()
        .iter()
        .map(|l| {
            (
                Matrix::zeros(l.weights().rows(), l.weights().cols()),
                vec![0.0; l.bias().len()],
            )
        })
        .collect();
    let mut metrics = Vec::with_capacity(per_epoch * config.epochs);
    let mut search_seconds = 0.0;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(
            config.seed,
            0xda7a,
            epoch as u64,
        )));
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let step = epoch * per_epoch + b;
            let iteration = step + 1;
            let lr = config.lr.at(step, per_epoch, config.epochs);

            let mut flips = 0;
            let (mut eligible, mut total) = (0, 0);
            let mut searched = false;
            for layer in model.layers_mut() {
                let r = layer.refresh_masks(iteration, config, config.criterion)?;
                flips += r.mask_flips;
                if layer.strategy() != Strategy::Dense {
                    eligible += r.eligible_blocks;
                    total += r.total_blocks;
                }
                searched |= r.searched;
                search_seconds += r.search_seconds;
            }

            let diverged = |e: Error| match e {
                Error::NonFinite { .. } => Error::Diverged { iteration },
                other => other,
            };
            let (x, labels) = data.batch(batch);
            let cache = model.forward_cached(&x).map_err(diverged)?;
            let (loss, mut g) = softmax_cross_entropy(&cache.logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { iteration });
            }

            let (mut gap_num, mut gap_den) = (0.0, 0.0);
            let mut grads = Vec::with_capacity(model.layers().len());
            for l in (0..model.layers().len()).rev() {
                let layer = &model.layers()[l];
                let input = &cache.inputs[l];
                let wg = weight_gradient(&g, input, layer)?;
                if wg.as_slice().iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged { iteration });
                }
                let bg: Vec<f64> = (0..g.rows()).map(|i| g.row(i).iter().sum()).collect();
                let propagated = input_gradient(&g, layer)?;
                if layer.strategy() == Strategy::BiMask {
                    let exact = backward_exact(&g, layer)?;
                    let diff = propagated.sub(&exact).map_err(diverged)?.frobenius_norm();
                    gap_num += diff * diff;
                    gap_den += exact.frobenius_norm().powi(2);
                }
                grads.push((wg, bg));
                if l > 0 {
                    // ReLU derivative from the stored activation
                    g = propagated
                        .zip_with(
                            input,
                            "relu backward",
                            |gv, a| if a > 0.0 { gv } else { 0.0 },
                        )
                        .map_err(diverged)?;
                }
            }
            grads.reverse();

            for ((layer, (wg, bg)), (vw, vb)) in
                model.layers_mut().iter_mut().zip(grads).zip(&mut velocity)
            {
                if !sgd_step(layer, &wg, &bg, vw, vb, lr, config) {
                    return Err(Error::Diverged { iteration });
                }
                layer.remember_weight_grad(wg);
            }

            let grad_gap_l2 = if gap_num == 0.0 {
                0.0
            } else if gap_den == 0.0 {
                f64::INFINITY
            } else {
                (gap_num / gap_den).sqrt()
            };
            let m = StepMetrics {
                iteration,
                epoch,
                lr,
                loss,
                grad_gap_l2,
                eligible_block_ratio: if total == 0 {
                    1.0
                } else {
                    eligible as f64 / total as f64
                },
                mask_flip_count: flips,
                searched,
            };
            on_step(&m);
            metrics.push(m);
        }
    }
    Ok((metrics, search_seconds))
}

/// Momentum SGD with L2 weight decay on `w` (not the bias). Returns false
/// once any parameter is non-finite.
fn sgd_step(
    layer: &mut super::layer::SparseLinearLayer,
    wg: &Matrix,
    bg: &[f64],
    vw: &mut Matrix,
    vb: &mut [f64],
    lr: f64,
    config: &TrainConfig,
) -> bool {
    let (w, bias) = layer.weights_mut();
    let (mu, wd) = (config.momentum, config.weight_decay);
    for ((wv, &gv), v) in w
        .values_mut()
        .iter_mut()
        .zip(wg.as_slice())
        .zip(vw.values_mut())
    {
        *v = mu * *v + gv + wd * *wv;
        *wv -= lr * *v;
    }
    for ((b, &gv), v) in bias.iter_mut().zip(bg).zip(vb) {
        *v = mu * *v + gv;
        *b -= lr * *v;
    }
    w.as_slice()
        .iter()
        .chain(bias.iter())
        .all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::NmPattern;
    use crate::train::config::LrSchedule;
    use crate::train::model::ModelSpec;
    use rand::Rng;

    fn blobs(dim: usize, classes: usize, per_class: usize, seed: u64) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..classes * per_class {
            let c = i % classes;
            features.extend(
                centers[c]
                    .iter()
                    .map(|v| v + 0.2 * rng.random_range(-1.0..1.0)),
            );
            labels.push(c);
        }
        Split::new(dim, features, labels).unwrap()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            delta_t: 3,
            k: 4,
            epochs,
            batch_size: 16,
            lr: LrSchedule {
                warmup_epochs: 1,
                peak_lr: 0.05,
            },
            ..TrainConfig::default()
        }
    }

    fn model(strategy: Strategy, n: usize, m: usize, seed: u64) -> Model {
        let spec = ModelSpec {
            input_dim: 8,
            hidden: vec![8],
            classes: 4,
            strategy,
            pattern: NmPattern::new(n, m).unwrap(),
            dense_head: false,
        };
        Model::init(&spec, seed).unwrap()
    }

    #[test]
    fn one_row_per_iteration_and_deterministic() {
        let data = blobs(8, 4, 10, 1);
        let cfg = config(3);
        let a = train(model(Strategy::BiMask, 2, 4, 2), &data, None, &cfg).unwrap();
        let b = train(model(Strategy::BiMask, 2, 4, 2), &data, None, &cfg).unwrap();
        assert_eq!(a.metrics.len(), 3 * batches_per_epoch(40, 16));
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_masked_weights, b.final_masked_weights);
        assert!(a.metrics.iter().any(|m| m.searched));
        assert_eq!(a.metrics.last().unwrap().iteration, a.metrics.len());
    }

    #[test]
    fn vanilla_and_gap_free_bimask_share_trajectories() {
        let data = blobs(8, 4, 10, 3);
        let cfg = TrainConfig {
            permutation_updates: false,
            ..config(2)
        };
        let v = train(model(Strategy::Vanilla, 4, 4, 5), &data, None, &cfg).unwrap();
        let b = train(model(Strategy::BiMask, 4, 4, 5), &data, None, &cfg).unwrap();
        let losses = |o: &TrainOutcome| o.metrics.iter().map(|m| m.loss).collect::<Vec<_>>();
        assert_eq!(losses(&v), losses(&b));
        assert!(b
            .metrics
            .iter()
            .all(|m| m.grad_gap_l2 == 0.0 && m.eligible_block_ratio == 1.0));
    }

    #[test]
    fn full_eligibility_means_no_gap() {
        let data = blobs(8, 4, 10, 4);
        let out = train(model(Strategy::BiMask, 2, 4, 6), &data, None, &config(4)).unwrap();
        for m in &out.metrics {
            assert!(m.grad_gap_l2 >= 0.0 && (0.0..=1.0).contains(&m.eligible_block_ratio));
            if m.eligible_block_ratio == 1.0 {
                assert!(m.grad_gap_l2 <= 1e-12);
            }
        }
    }

    #[test]
    fn non_bimask_strategies_have_no_gap() {
        let data = blobs(8, 4, 10, 5);
        for s in [Strategy::Dense, Strategy::Vanilla, Strategy::Transposable] {
            let out = train(model(s, 2, 4, 1), &data, None, &config(1)).unwrap();
            assert!(out.metrics.iter().all(|m| m.grad_gap_l2 == 0.0));
        }
    }

    #[test]
    fn dense_learns_separable_blobs() {
        let data = blobs(8, 4, 25, 7);
        let cfg = TrainConfig {
            lr: LrSchedule {
                warmup_epochs: 1,
                peak_lr: 0.1,
            },
            ..config(30)
        };
        let out = train(model(Strategy::Dense, 2, 4, 8), &data, Some(&data), &cfg).unwrap();
        assert!(out.train_accuracy >= 0.95, "{}", out.train_accuracy);
        assert_eq!(out.test_accuracy, Some(out.train_accuracy));
    }

    #[test]
    fn divergence_reports_iteration() {
        let data = blobs(8, 4, 10, 9);
        let cfg = TrainConfig {
            lr: LrSchedule {
                warmup_epochs: 0,
                peak_lr: 1e200,
            },
            momentum: 0.0,
            ..config(5)
        };
        match train(model(Strategy::Dense, 2, 4, 1), &data, None, &cfg) {
            Err(Error::Diverged { iteration }) => assert!(iteration >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_data() {
        let data = blobs(6, 4, 2, 1);
        assert!(train(model(Strategy::Dense, 2, 4, 1), &data, None, &config(1)).is_err());
    }

    #[test]
    fn csv_row_shape() {
        let m = StepMetrics {
            iteration: 1,
            epoch: 0,
            lr: 0.1,
            loss: 1.0,
            grad_gap_l2: 0.0,
            eligible_block_ratio: 1.0,
            mask_flip_count: 3,
            searched: false,
        };
        assert_eq!(
            m.to_csv_row().split(',').count(),
            StepMetrics::CSV_HEADER.split(',').count()
        );
    }
}
