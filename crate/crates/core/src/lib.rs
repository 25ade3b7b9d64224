//! Bi-directional N:M sparse training toolkit.
//!
//! - [`tensor`]: dense matrices and the [`NmPattern`] type.
//! - [`mask`]: forward, backward and transposable mask generation,
//!   validation and diversity counting.
//! - [`permutation`]: row-permutation search that maximizes column blocks
//!   already satisfying N:M.
//! - [`train`]: sparse linear layers, exact and bi-directional backward
//!   passes, and the SGD training loop with gradient-gap metrics.
//! - [`harness`]: datasets, experiment configs, metric files and the CLI.
//!
//! Inner loops run on rayon when the default `parallel` feature is enabled.

pub mod error;
pub mod harness;
pub mod mask;
mod par;
pub mod permutation;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use mask::{
    backward_mask, forward_mask, mask_diversity, transposable_mask, validate_mask,
    BinarizationCriterion, Direction, DiversityFamily, Mask, TransposableMethod,
};
pub use par::is_parallel;
pub use permutation::{
    brute_force_best_permutation, count_eligible_blocks, search_permutation, Permutation,
    SearchReport,
};
pub use tensor::{matmul, top_n_threshold, transpose, Matrix, NmPattern};
