//! Masked linear layers, the exact and bi-directional backward passes, and
//! the SGD training loop with gradient-gap instrumentation.

mod config;
mod layer;
mod model;
mod trainer;

pub use config::{LrSchedule, TrainConfig};
pub use layer::{
    backward_bimask, backward_exact, input_gradient, sparse_forward, weight_gradient,
    RefreshReport, SparseLinearLayer, Strategy,
};
pub use model::{softmax_cross_entropy, Model, ModelSpec, Split};
pub use trainer::{batches_per_epoch, train, train_with, StepMetrics, TrainOutcome};
