use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, NmPattern};

use super::layer::{mix_seed, sparse_forward, SparseLinearLayer, Strategy};

/// Labelled examples stored row-major: example `i` is
/// `features[i * dim .. (i + 1) * dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Split {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return Err(Error::InvalidArgument(
                "a split needs at least one example and feature".into(),
            ));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature values for {} examples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature {v}")));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// The chosen examples as columns of a `dim × indices.len()` matrix.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let x = Matrix::from_fn(self.dim, indices.len(), |d, j| {
            self.features[indices[j] * self.dim + d]
        });
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Shape of a ReLU multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub strategy: Strategy,
    pub pattern: NmPattern,
    /// Keep the output layer dense regardless of `strategy`.
    pub dense_head: bool,
}

impl ModelSpec {
    /// `(inputs, outputs)` of every layer in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.classes);
        widths.windows(2).map(|p| (p[0], p[1])).collect()
    }
}

/// Linear layers with ReLU in between and raw logits out.
#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<SparseLinearLayer>,
}

/// Activations kept for the backward pass.
pub(crate) struct ForwardCache {
    /// Input of each layer.
    pub inputs: Vec<Matrix>,
    pub logits: Matrix,
}

impl Model {
    /// Kaiming-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let dims = spec.layer_dims();
        if dims.iter().any(|&(i, o)| i == 0 || o == 0) {
            return Err(Error::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        let last = dims.len() - 1;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(l, &(fan_in, fan_out))| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x1a7e, l as u64));
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let w = Matrix::from_fn(fan_out, fan_in, |_, _| normal.sample(&mut rng));
                let strategy = if l == last && spec.dense_head {
                    Strategy::Dense
                } else {
                    spec.strategy
                };
                SparseLinearLayer::with_salt(
                    w,
                    vec![0.0; fan_out],
                    spec.pattern,
                    strategy,
                    l as u64,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    /// Checks that consecutive widths chain.
    pub fn from_layers(layers: Vec<SparseLinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "a model needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            let (a, b) = (pair[0].weights(), pair[1].weights());
            if a.rows() != b.cols() {
                return Err(Error::ShapeMismatch {
                    op: "layer chain",
                    left_rows: a.rows(),
                    left_cols: a.cols(),
                    right_rows: b.rows(),
                    right_cols: b.cols(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[SparseLinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [SparseLinearLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights().cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights().rows()
    }

    /// `mask ⊙ w` for every layer.
    pub fn masked_weights(&self) -> Vec<Matrix> {
        self.layers
            .iter()
            .map(SparseLinearLayer::effective_weights)
            .collect()
    }

    pub(crate) fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = sparse_forward(&a, layer)?;
            add_bias(&mut z, layer.bias());
            if let Some(k) = z.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: k / z.cols(),
                    col: k % z.cols(),
                    value: z.as_slice()[k],
                });
            }
            if l < last {
                z = z.map(|v| v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        Ok(ForwardCache { inputs, logits: a })
    }

    /// Logits for the columns of `x`.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_cached(x).map(|c| c.logits)
    }

    /// Fraction of `split` classified correctly.
    pub fn accuracy(&self, split: &Split) -> Result<f64> {
        const CHUNK: usize = 1024;
        let mut correct = 0;
        let all: Vec<usize> = (0..split.len()).collect();
        for chunk in all.chunks(CHUNK) {
            let (x, labels) = split.batch(chunk);
            let logits = self.logits(&x)?;
            correct += labels
                .iter()
                .enumerate()
                .filter(|&(j, &label)| argmax_column(&logits, j) == label)
                .count();
        }
        Ok(correct as f64 / split.len() as f64)
    }
}

pub(crate) fn add_bias(z: &mut Matrix, bias: &[f64]) {
    let cols = z.cols();
    for (i, row) in z.values_mut().chunks_mut(cols).enumerate() {
        for v in row {
            *v += bias[i];
        }
    }
}

fn argmax_column(m: &Matrix, j: usize) -> usize {
    (0..m.rows()).fold(0, |best, i| {
        if m.get(i, j) > m.get(best, j) {
            i
        } else {
            best
        }
    })
}

/// Mean softmax cross-entropy over the columns of `logits` and its gradient
/// with respect to `logits`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (classes, batch) = logits.shape();
    if labels.len() != batch {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut grad = Matrix::zeros(classes, batch);
    let mut loss = 0.0;
    for (j, &label) in labels.iter().enumerate() {
        let max = (0..classes)
            .map(|i| logits.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..classes).map(|i| (logits.get(i, j) - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - logits.get(label, j);
        for i in 0..classes {
            let p = (logits.get(i, j) - log_z).exp();
            let target = if i == label { 1.0 } else { 0.0 };
            grad.set(i, j, (p - target) / batch as f64);
        }
    }
    Ok((loss / batch as f64, grad))
}
