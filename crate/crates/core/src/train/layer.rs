use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mask::{backward_mask, forward_mask, transposable_mask, BinarizationCriterion, Mask};
use crate::permutation::{search_permutation, EligibilityCounter, Permutation};
use crate::tensor::{matmul, transpose, Matrix, NmPattern};

use super::config::TrainConfig;

/// How a layer masks its weights in the two directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// No masking; the reference dense path.
    Dense,
    /// Row-block forward mask, exact dense backward.
    Vanilla,
    /// One mask with both row and column blocks, used in both directions.
    Transposable,
    /// Row-block forward mask plus a column-block backward mask over
    /// permuted rows.
    BiMask,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Dense => "dense",
            Strategy::Vanilla => "vanilla",
            Strategy::Transposable => "transposable",
            Strategy::BiMask => "bimask",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Strategy::Dense),
            "vanilla" => Ok(Strategy::Vanilla),
            "transposable" => Ok(Strategy::Transposable),
            "bimask" | "bi-mask" => Ok(Strategy::BiMask),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
struct BackwardState {
    mask: Mask,
    built_for: Permutation,
}

/// A linear map `y = (mask ⊙ w) x + b` with weights `out × in`.
#[derive(Debug, Clone)]
pub struct SparseLinearLayer {
    w: Matrix,
    bias: Vec<f64>,
    pattern: NmPattern,
    strategy: Strategy,
    fwd_mask: Option<Mask>,
    bwd: Option<BackwardState>,
    perm: Permutation,
    last_weight_grad: Option<Matrix>,
    seed_salt: u64,
}

/// What one mask refresh did.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefreshReport {
    /// Forward-mask bits that changed since the previous refresh.
    pub mask_flips: usize,
    pub eligible_blocks: usize,
    pub total_blocks: usize,
    pub searched: bool,
    pub search_seconds: f64,
}

impl SparseLinearLayer {
    /// Builds the layer and its initial masks (no permutation search).
    pub fn new(w: Matrix, bias: Vec<f64>, pattern: NmPattern, strategy: Strategy) -> Result<Self> {
        Self::with_salt(w, bias, pattern, strategy, 0)
    }

    /// Like [`SparseLinearLayer::new`]; `seed_salt` decorrelates the random
    /// streams of layers sharing one training seed.
    pub fn with_salt(
        w: Matrix,
        bias: Vec<f64>,
        pattern: NmPattern,
        strategy: Strategy,
        seed_salt: u64,
    ) -> Result<Self> {
        if bias.len() != w.rows() {
            return Err(Error::InvalidArgument(format!(
                "bias has {} entries for {} output rows",
                bias.len(),
                w.rows()
            )));
        }
        match strategy {
            Strategy::Dense => {}
            Strategy::Vanilla => pattern.check_divides("layer input dim", w.cols())?,
            Strategy::Transposable | Strategy::BiMask => {
                pattern.check_divides("layer input dim", w.cols())?;
                pattern.check_divides("layer output dim", w.rows())?;
            }
        }
        let rows = w.rows();
        let mut layer = Self {
            w,
            bias,
            pattern,
            strategy,
            fwd_mask: None,
            bwd: None,
            perm: Permutation::identity(rows),
            last_weight_grad: None,
            seed_salt,
        };
        let init = TrainConfig {
            permutation_updates: false,
            ..TrainConfig::default()
        };
        layer.refresh_masks(0, &init, BinarizationCriterion::WeightMagnitude)?;
        Ok(layer)
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn pattern(&self) -> NmPattern {
        self.pattern
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn forward_mask(&self) -> Option<&Mask> {
        self.fwd_mask.as_ref()
    }

    pub fn backward_mask(&self) -> Option<&Mask> {
        self.bwd.as_ref().map(|b| &b.mask)
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    /// Replaces the permutation without rebuilding the backward mask; the
    /// next [`backward_bimask`] fails until [`SparseLinearLayer::refresh_masks`] runs.
    pub fn set_permutation(&mut self, perm: Permutation) -> Result<()> {
        if perm.len() != self.w.rows() {
            return Err(Error::InvalidPermutation(format!(
                "{} entries for {} rows",
                perm.len(),
                self.w.rows()
            )));
        }
        self.perm = perm;
        Ok(())
    }

    /// Overwrites the dense weights. Masks are not refreshed.
    pub fn set_weights(&mut self, w: Matrix) -> Result<()> {
        if w.shape() != self.w.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_weights",
                left_rows: self.w.rows(),
                left_cols: self.w.cols(),
                right_rows: w.rows(),
                right_cols: w.cols(),
            });
        }
        self.w = w;
        Ok(())
    }

    /// `mask ⊙ w`, or `w` for the dense strategy.
    pub fn effective_weights(&self) -> Matrix {
        match &self.fwd_mask {
            Some(mask) => mask.apply(&self.w).expect("mask matches weights"),
            None => self.w.clone(),
        }
    }

    pub(crate) fn weights_mut(&mut self) -> (&mut Matrix, &mut Vec<f64>) {
        (&mut self.w, &mut self.bias)
    }

    pub(crate) fn remember_weight_grad(&mut self, grad: Matrix) {
        self.last_weight_grad = Some(grad);
    }

    /// Recomputes the masks for 1-based `iteration`.
    ///
    /// The forward (or transposable) mask is rebuilt every call. For the
    /// bi-directional strategy the permutation is re-searched when
    /// `config.is_search_iteration(iteration)`, then the backward mask is
    /// rebuilt from the current permutation. The gradient criterion uses the
    /// weight gradient of the previous iteration and falls back to weight
    /// magnitude before one exists.
    pub fn refresh_masks(
        &mut self,
        iteration: usize,
        config: &TrainConfig,
        criterion: BinarizationCriterion,
    ) -> Result<RefreshReport> {
        let new_mask = match self.strategy {
            Strategy::Dense => None,
            Strategy::Vanilla | Strategy::BiMask => Some(forward_mask(&self.w, self.pattern)?),
            Strategy::Transposable => Some(transposable_mask(
                &self.w,
                self.pattern,
                config.transposable_method,
            )?),
        };
        let mask_flips = match (&self.fwd_mask, &new_mask) {
            (Some(old), Some(new)) => old.flips_from(new),
            _ => 0,
        };
        self.fwd_mask = new_mask;

        let masked = self.effective_weights();
        let mut report = RefreshReport {
            mask_flips,
            ..Default::default()
        };

        if self.strategy == Strategy::BiMask {
            if config.is_search_iteration(iteration) {
                let seed = mix_seed(config.seed, self.seed_salt, iteration as u64);
                let found = search_permutation(&masked, self.pattern, config.k, &self.perm, seed)?;
                report.searched = true;
                report.search_seconds = found.elapsed_seconds;
                self.perm = found.chosen;
            }
            let criterion = match (criterion, &self.last_weight_grad) {
                (BinarizationCriterion::GradientMagnitude, None) => {
                    BinarizationCriterion::WeightMagnitude
                }
                (c, _) => c.reseeded(mix_seed(
                    config.seed,
                    self.seed_salt ^ 0x5eed,
                    iteration as u64,
                )),
            };
            let fwd = self.fwd_mask.as_ref().expect("bimask has a forward mask");
            let mask = backward_mask(
                &self.w,
                fwd,
                &self.perm,
                criterion,
                self.last_weight_grad.as_ref(),
            )?;
            self.bwd = Some(BackwardState {
                mask,
                built_for: self.perm.clone(),
            });
        }

        if self.w.rows() % self.pattern.m() == 0 {
            let counter = EligibilityCounter::new(&masked, self.pattern)?;
            report.eligible_blocks = counter.eligible(&self.perm);
            report.total_blocks = counter.total_blocks();
        }
        Ok(report)
    }
}

/// SplitMix64-style mixing of a base seed with two stream identifiers.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_rows(
    op: &'static str,
    g: &Matrix,
    expected_rows: usize,
    layer: &SparseLinearLayer,
) -> Result<()> {
    if g.rows() != expected_rows {
        return Err(Error::ShapeMismatch {
            op,
            left_rows: layer.w.rows(),
            left_cols: layer.w.cols(),
            right_rows: g.rows(),
            right_cols: g.cols(),
        });
    }
    Ok(())
}

/// `(mask ⊙ w) x`; the bias is applied by the model.
pub fn sparse_forward(x: &Matrix, layer: &SparseLinearLayer) -> Result<Matrix> {
    check_rows("sparse_forward", x, layer.w.cols(), layer)?;
    matmul(&layer.effective_weights(), x)
}

/// The ideal input gradient `(mask ⊙ w)ᵀ g_y`.
pub fn backward_exact(g_y: &Matrix, layer: &SparseLinearLayer) -> Result<Matrix> {
    check_rows("backward_exact", g_y, layer.w.rows(), layer)?;
    matmul(&transpose(&layer.effective_weights()), g_y)
}

/// The bi-directional input gradient `(B̄ ⊙ w[P, :])ᵀ g_y[P, :]`.
///
/// Outputs live in rows of `g_y` here, so the permutation reorders rows of
/// both operands.
pub fn backward_bimask(g_y: &Matrix, layer: &SparseLinearLayer) -> Result<Matrix> {
    if layer.strategy != Strategy::BiMask {
        return Err(Error::Strategy(format!(
            "bi-directional backward needs a bimask layer, got {}",
            layer.strategy
        )));
    }
    check_rows("backward_bimask", g_y, layer.w.rows(), layer)?;
    let state = layer.bwd.as_ref().ok_or(Error::StaleBackwardMask)?;
    if state.built_for != layer.perm {
        return Err(Error::StaleBackwardMask);
    }
    let order = layer.perm.order();
    let weights = state.mask.apply(&layer.w.permute_rows(order))?;
    matmul(&transpose(&weights), &g_y.permute_rows(order))
}

/// Input gradient the layer actually propagates under its strategy.
pub fn input_gradient(g_y: &Matrix, layer: &SparseLinearLayer) -> Result<Matrix> {
    match layer.strategy {
        Strategy::BiMask => backward_bimask(g_y, layer),
        _ => backward_exact(g_y, layer),
    }
}

/// Straight-through weight gradient `g_y xᵀ`: the gradient with respect to
/// the masked weights, passed to every dense weight.
pub fn weight_gradient(g_y: &Matrix, x: &Matrix, layer: &SparseLinearLayer) -> Result<Matrix> {
    check_rows("weight_gradient", g_y, layer.w.rows(), layer)?;
    check_rows("weight_gradient", x, layer.w.cols(), layer)?;
    if g_y.cols() != x.cols() {
        return Err(Error::ShapeMismatch {
            op: "weight_gradient batch",
            left_rows: g_y.rows(),
            left_cols: g_y.cols(),
            right_rows: x.rows(),
            right_cols: x.cols(),
        });
    }
    matmul(g_y, &transpose(x))
}
