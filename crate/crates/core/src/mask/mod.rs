//! N:M mask families: forward (row blocks), backward (column blocks) and
//! transposable (both).

mod diversity;
mod transposable;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use diversity::{
    diversity_table, mask_diversity, transposable_diversity_by_enumeration,
    transposable_diversity_by_profiles, DiversityFamily, DiversityRow, DIVERSITY_TABLE_PATTERNS,
};
pub use transposable::{tile_kept_magnitudes, transposable_mask, TransposableMethod, EXACT_MAX_M};

use crate::error::{Error, Result};
use crate::par;
use crate::permutation::Permutation;
use crate::tensor::{parse_body, parse_dims, Matrix, NmPattern};

/// Which blocks a mask constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Row-aligned blocks of M contiguous columns.
    Forward,
    /// Column-aligned blocks of M contiguous rows.
    Backward,
    /// Both row and column blocks.
    Transposable,
}

impl Direction {
    fn row_blocks(self) -> bool {
        matches!(self, Direction::Forward | Direction::Transposable)
    }

    fn col_blocks(self) -> bool {
        matches!(self, Direction::Backward | Direction::Transposable)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Transposable => "transposable",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            "transposable" => Ok(Direction::Transposable),
            other => Err(Error::InvalidArgument(format!(
                "unknown mask direction {other:?}"
            ))),
        }
    }
}

/// Statistic used to pick the N survivors of each backward column block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BinarizationCriterion {
    /// Largest magnitudes of the forward-masked weights.
    #[default]
    WeightMagnitude,
    /// Largest magnitudes of the forward-masked weight gradient.
    GradientMagnitude,
    /// N draws without replacement, probability proportional to masked magnitude.
    MultinomialSampling { seed: u64 },
    /// N uniformly chosen positions.
    Random { seed: u64 },
}

impl BinarizationCriterion {
    /// Parses `weight`, `gradient`, `multinomial` or `random`; the sampling
    /// variants take `seed`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        match name {
            "weight" | "weight-magnitude" => Ok(Self::WeightMagnitude),
            "gradient" | "gradient-magnitude" => Ok(Self::GradientMagnitude),
            "multinomial" | "multinomial-sampling" => Ok(Self::MultinomialSampling { seed }),
            "random" => Ok(Self::Random { seed }),
            other => Err(Error::InvalidArgument(format!(
                "unknown criterion {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::WeightMagnitude => "weight",
            Self::GradientMagnitude => "gradient",
            Self::MultinomialSampling { .. } => "multinomial",
            Self::Random { .. } => "random",
        }
    }

    /// Same criterion with its seed replaced, for per-iteration reseeding.
    pub fn reseeded(self, seed: u64) -> Self {
        match self {
            Self::MultinomialSampling { .. } => Self::MultinomialSampling { seed },
            Self::Random { .. } => Self::Random { seed },
            other => other,
        }
    }
}

/// A binary matrix together with the block constraint it is meant to obey.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    direction: Direction,
    pattern: NmPattern,
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

/// One block that holds more than N ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub axis: BlockAxis,
    /// Row index for row blocks, column index for column blocks.
    pub line: usize,
    /// Index of the block along that line.
    pub block: usize,
    pub count: usize,
    pub limit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockAxis {
    Row,
    Column,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.axis {
            BlockAxis::Row => "row",
            BlockAxis::Column => "column",
        };
        write!(
            f,
            "{what} {} block {}: {} ones (limit {})",
            self.line, self.block, self.count, self.limit
        )
    }
}

impl Mask {
    /// Wraps raw bits. Checks shape divisibility only; use [`validate_mask`]
    /// for the block constraints.
    pub fn new(
        direction: Direction,
        pattern: NmPattern,
        rows: usize,
        cols: usize,
        bits: Vec<bool>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        if bits.len() != rows * cols {
            return Err(Error::ValueCount {
                rows,
                cols,
                expected: rows * cols,
                actual: bits.len(),
            });
        }
        if direction.row_blocks() {
            pattern.check_divides("mask cols", cols)?;
        }
        if direction.col_blocks() {
            pattern.check_divides("mask rows", rows)?;
        }
        Ok(Self {
            direction,
            pattern,
            rows,
            cols,
            bits,
        })
    }

    pub fn from_rows<R: AsRef<[u8]>>(
        direction: Direction,
        pattern: NmPattern,
        rows: &[R],
    ) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut bits = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::InvalidMask("ragged rows".into()));
            }
            for &b in row {
                bits.push(match b {
                    0 => false,
                    1 => true,
                    other => return Err(Error::InvalidMask(format!("non-binary entry {other}"))),
                });
            }
        }
        Self::new(direction, pattern, r, c, bits)
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn pattern(&self) -> NmPattern {
        self.pattern
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(
            self.rows,
            self.cols,
            |i, j| if self.get(i, j) { 1.0 } else { 0.0 },
        )
    }

    /// `self ⊙ w`.
    pub fn apply(&self, w: &Matrix) -> Result<Matrix> {
        if w.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                op: "apply mask",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: w.rows(),
                right_cols: w.cols(),
            });
        }
        let values = w
            .as_slice()
            .iter()
            .zip(&self.bits)
            .map(|(&v, &b)| if b { v } else { 0.0 })
            .collect();
        Matrix::new(self.rows, self.cols, values)
    }

    /// Number of positions where the two masks disagree.
    pub fn flips_from(&self, other: &Mask) -> usize {
        assert_eq!(self.shape(), other.shape(), "mask shapes differ");
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Elementwise `self <= other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.shape() == other.shape() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Row `r` of the result is row `order[r]` of `self`. Keeps the direction
    /// tag, so the result may need revalidation.
    pub fn permute_rows(&self, order: &[usize]) -> Mask {
        assert_eq!(order.len(), self.rows, "row order length");
        let mut bits = Vec::with_capacity(self.bits.len());
        for &src in order {
            bits.extend_from_slice(&self.bits[src * self.cols..(src + 1) * self.cols]);
        }
        Mask {
            bits,
            ..self.clone()
        }
    }

    /// Same bits under a different direction tag.
    pub fn retagged(&self, direction: Direction) -> Result<Mask> {
        Mask::new(
            direction,
            self.pattern,
            self.rows,
            self.cols,
            self.bits.clone(),
        )
    }

    /// Text form: a `direction n m` line, then the matrix layout with 0/1 entries.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {}\n{} {}\n",
            self.direction,
            self.pattern.n(),
            self.pattern.m(),
            self.rows,
            self.cols
        );
        for i in 0..self.rows {
            let line: Vec<&str> = self.bits[i * self.cols..(i + 1) * self.cols]
                .iter()
                .map(|&b| if b { "1" } else { "0" })
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (dline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing `direction n m` header".into(),
        })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: dline + 1,
                message: format!("expected `direction n m`, got {header:?}"),
            });
        }
        let direction: Direction = parts[0].parse()?;
        let pattern = NmPattern::from_str(&format!("{}:{}", parts[1], parts[2]))?;
        let (sline, dims) = lines.next().ok_or(Error::Parse {
            line: dline + 2,
            message: "missing `rows cols` line".into(),
        })?;
        let (rows, cols) = parse_dims(dims, sline + 1)?;
        let bits = parse_body(lines, rows, cols, sline + 1, |tok, line| match tok {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::Parse {
                line,
                message: format!("mask entry must be 0 or 1, got {tok:?}"),
            }),
        })?;
        Mask::new(direction, pattern, rows, cols, bits)
    }
}

/// Every block of the mask holding more than N ones. Never fails.
pub fn validate_mask(mask: &Mask) -> Vec<Violation> {
    let (n, m) = (mask.pattern.n(), mask.pattern.m());
    let mut out = Vec::new();
    if mask.direction.row_blocks() {
        for i in 0..mask.rows {
            for block in 0..mask.cols / m {
                let count = (block * m..(block + 1) * m)
                    .filter(|&j| mask.get(i, j))
                    .count();
                if count > n {
                    out.push(Violation {
                        axis: BlockAxis::Row,
                        line: i,
                        block,
                        count,
                        limit: n,
                    });
                }
            }
        }
    }
    if mask.direction.col_blocks() {
        for j in 0..mask.cols {
            for block in 0..mask.rows / m {
                let count = (block * m..(block + 1) * m)
                    .filter(|&i| mask.get(i, j))
                    .count();
                if count > n {
                    out.push(Violation {
                        axis: BlockAxis::Column,
                        line: j,
                        block,
                        count,
                        limit: n,
                    });
                }
            }
        }
    }
    out
}

/// Picks `n` of `len` positions: largest statistic first, then positions
/// flagged as preferred, then lowest index.
pub(crate) fn select_top(n: usize, len: usize, key: impl Fn(usize) -> (f64, bool)) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.sort_by(|&a, &b| {
        let (sa, pa) = key(a);
        let (sb, pb) = key(b);
        sb.total_cmp(&sa).then(pb.cmp(&pa)).then(a.cmp(&b))
    });
    idx.truncate(n);
    idx
}

/// Top-N magnitude mask over row-aligned blocks, exactly N ones per block.
/// Ties keep the lowest column index.
pub fn forward_mask(w: &Matrix, pattern: NmPattern) -> Result<Mask> {
    pattern.check_divides("weight cols", w.cols())?;
    let (n, m) = (pattern.n(), pattern.m());
    let mut bits = vec![false; w.rows() * w.cols()];
    par::for_each_chunk_mut(&mut bits, w.cols(), |i, row_bits| {
        let row = w.row(i);
        for (block_bits, block) in row_bits.chunks_mut(m).zip(row.chunks(m)) {
            for k in select_top(n, m, |k| (block[k].abs(), false)) {
                block_bits[k] = true;
            }
        }
    });
    Mask::new(Direction::Forward, pattern, w.rows(), w.cols(), bits)
}

/// Backward mask over column-aligned blocks of the row-permuted masked
/// weights `(fwd ⊙ w)[perm, :]`.
///
/// The result lives in permuted row coordinates: entry `(r, l)` refers to
/// weight `(perm[r], l)`. Each column block keeps the forward bit of its N
/// top-ranked entries and zeroes the rest, so the result never exceeds the
/// permuted forward mask. Rank ties favor entries whose forward bit is set,
/// which makes an already-eligible block reproduce its forward bits.
///
/// `grad` is the weight gradient, required by
/// [`BinarizationCriterion::GradientMagnitude`] and ignored otherwise.
pub fn backward_mask(
    w: &Matrix,
    fwd: &Mask,
    perm: &Permutation,
    criterion: BinarizationCriterion,
    grad: Option<&Matrix>,
) -> Result<Mask> {
    let pattern = fwd.pattern();
    pattern.check_divides("weight rows", w.rows())?;
    if fwd.shape() != w.shape() {
        return Err(Error::ShapeMismatch {
            op: "backward mask",
            left_rows: w.rows(),
            left_cols: w.cols(),
            right_rows: fwd.rows(),
            right_cols: fwd.cols(),
        });
    }
    if fwd.direction() != Direction::Forward {
        return Err(Error::InvalidMask(format!(
            "backward mask needs a forward mask, got {}",
            fwd.direction()
        )));
    }
    if let Some(v) = validate_mask(fwd).first() {
        return Err(Error::InvalidMask(format!(
            "forward mask violates its pattern: {v}"
        )));
    }
    if perm.len() != w.rows() {
        return Err(Error::InvalidPermutation(format!(
            "permutation over {} rows applied to {} rows",
            perm.len(),
            w.rows()
        )));
    }
    let grad = match (criterion, grad) {
        (BinarizationCriterion::GradientMagnitude, None) => return Err(Error::MissingGradient),
        (BinarizationCriterion::GradientMagnitude, Some(g)) => {
            if g.shape() != w.shape() {
                return Err(Error::ShapeMismatch {
                    op: "gradient criterion",
                    left_rows: w.rows(),
                    left_cols: w.cols(),
                    right_rows: g.rows(),
                    right_cols: g.cols(),
                });
            }
            Some(g)
        }
        _ => None,
    };

    let (n, m) = (pattern.n(), pattern.m());
    let (rows, cols) = w.shape();
    let order = perm.order();
    let columns: Vec<Vec<bool>> = par::map_range(cols, |l| {
        let mut rng = match criterion {
            BinarizationCriterion::MultinomialSampling { seed }
            | BinarizationCriterion::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(l as u64);
                Some(rng)
            }
            _ => None,
        };
        let mut col = vec![false; rows];
        for block in 0..rows / m {
            let base = block * m;
            let fbit = |k: usize| fwd.get(order[base + k], l);
            let masked = |k: usize| {
                if fbit(k) {
                    w.get(order[base + k], l).abs()
                } else {
                    0.0
                }
            };
            let chosen = match criterion {
                BinarizationCriterion::WeightMagnitude => {
                    select_top(n, m, |k| (masked(k), fbit(k)))
                }
                BinarizationCriterion::GradientMagnitude => {
                    let g = grad.expect("checked above");
                    select_top(n, m, |k| {
                        let stat = if fbit(k) {
                            g.get(order[base + k], l).abs()
                        } else {
                            0.0
                        };
                        (stat, fbit(k))
                    })
                }
                BinarizationCriterion::MultinomialSampling { .. } => {
                    let weights: Vec<f64> = (0..m).map(masked).collect();
                    sample_proportional(rng.as_mut().expect("seeded"), &weights, n)
                }
                BinarizationCriterion::Random { .. } => {
                    sample(rng.as_mut().expect("seeded"), m, n).into_vec()
                }
            };
            for k in chosen {
                col[base + k] = fbit(k);
            }
        }
        col
    });

    let mut bits = vec![false; rows * cols];
    for (l, col) in columns.iter().enumerate() {
        for (r, &b) in col.iter().enumerate() {
            bits[r * cols + l] = b;
        }
    }
    Mask::new(Direction::Backward, pattern, rows, cols, bits)
}

/// Draws `n` distinct indices with probability proportional to `weights`,
/// falling back to uniform once the remaining mass is zero.
fn sample_proportional(rng: &mut impl Rng, weights: &[f64], n: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut chosen = Vec::with_capacity(n);
    while chosen.len() < n && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pos = remaining.len() - 1;
            for (p, &i) in remaining.iter().enumerate() {
                if weights[i] <= 0.0 {
                    continue;
                }
                if target < weights[i] {
                    pos = p;
                    break;
                }
                target -= weights[i];
                pos = p;
            }
            pos
        } else {
            rng.random_range(0..remaining.len())
        };
        chosen.push(remaining.remove(pick));
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn p(n: usize, m: usize) -> NmPattern {
        NmPattern::new(n, m).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn forward_top2_by_magnitude() {
        let w = Matrix::from_rows(&[[0.1, -0.5, 0.3, 0.2]]).unwrap();
        let mask = forward_mask(&w, p(2, 4)).unwrap();
        assert_eq!(mask.bits(), &[false, true, true, false]);
    }

    #[test]
    fn forward_all_tie_keeps_lowest_index() {
        let w = Matrix::zeros(1, 4);
        let mask = forward_mask(&w, p(2, 4)).unwrap();
        assert_eq!(mask.bits(), &[true, true, false, false]);
    }

    #[test]
    fn forward_one_of_four_is_block_argmax() {
        let w = random_matrix(8, 8, 11);
        let mask = forward_mask(&w, p(1, 4)).unwrap();
        for i in 0..8 {
            for block in 0..2 {
                // first index of the maximal magnitude in the block
                let mut best = block * 4;
                for j in block * 4..block * 4 + 4 {
                    if w.get(i, j).abs() > w.get(i, best).abs() {
                        best = j;
                    }
                }
                for j in block * 4..block * 4 + 4 {
                    assert_eq!(mask.get(i, j), j == best, "row {i} col {j}");
                }
            }
        }
    }

    #[test]
    fn forward_rejects_ragged_columns() {
        let err = forward_mask(&Matrix::zeros(2, 6), p(2, 4)).unwrap_err();
        assert!(matches!(err, Error::Divisibility { size: 6, m: 4, .. }));
    }

    #[test]
    fn validate_reports_every_bad_row_block() {
        let mask = Mask::new(Direction::Forward, p(2, 4), 4, 4, vec![true; 16]).unwrap();
        let v = validate_mask(&mask);
        assert_eq!(v.len(), 4);
        assert!(v
            .iter()
            .all(|v| v.axis == BlockAxis::Row && v.count == 4 && v.limit == 2));
    }

    #[test]
    fn validate_reports_single_bad_column_block() {
        let rows = [[1u8, 1, 0], [1, 1, 0], [1, 0, 0], [0, 0, 1]];
        let mask = Mask::from_rows(Direction::Backward, p(2, 4), &rows).unwrap();
        let v = validate_mask(&mask);
        assert_eq!(
            v,
            vec![Violation {
                axis: BlockAxis::Column,
                line: 0,
                block: 0,
                count: 3,
                limit: 2
            }]
        );
    }

    #[test]
    fn backward_top2_of_masked_column() {
        // column 0 holds masked magnitudes [0.9, 0.8, 0.1, 0.0] with forward bits [1, 1, 1, 0]
        let w = Matrix::from_rows(&[
            [0.9, 0.0, 0.0, 0.0],
            [0.8, 0.0, 0.0, 0.0],
            [0.1, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        let fwd = Mask::from_rows(
            Direction::Forward,
            p(2, 4),
            &[[1u8, 1, 0, 0], [1, 1, 0, 0], [1, 1, 0, 0], [0, 1, 1, 0]],
        )
        .unwrap();
        let bwd = backward_mask(
            &w,
            &fwd,
            &Permutation::identity(4),
            BinarizationCriterion::WeightMagnitude,
            None,
        )
        .unwrap();
        let col0: Vec<bool> = (0..4).map(|i| bwd.get(i, 0)).collect();
        assert_eq!(col0, vec![true, true, false, false]);
    }

    #[test]
    fn backward_equals_forward_on_eligible_matrix() {
        // forward support is a permutation-like pattern, so every column block
        // of the masked weights already holds at most 2 non-zeros.
        let w = Matrix::from_fn(4, 4, |i, j| {
            if (j + 4 - i) % 4 < 2 {
                1.0 + (i * 4 + j) as f64
            } else {
                0.01
            }
        });
        let fwd = forward_mask(&w, p(2, 4)).unwrap();
        let bwd = backward_mask(
            &w,
            &fwd,
            &Permutation::identity(4),
            BinarizationCriterion::WeightMagnitude,
            None,
        )
        .unwrap();
        assert_eq!(bwd.bits(), fwd.bits());
    }

    #[test]
    fn backward_random_8x4_postconditions() {
        let pat = p(2, 4);
        let w = random_matrix(8, 4, 5);
        let fwd = forward_mask(&w, pat).unwrap();
        let bwd = backward_mask(
            &w,
            &fwd,
            &Permutation::identity(8),
            BinarizationCriterion::WeightMagnitude,
            None,
        )
        .unwrap();
        for l in 0..4 {
            for block in 0..2 {
                let count = (block * 4..block * 4 + 4)
                    .filter(|&r| bwd.get(r, l))
                    .count();
                assert!(count <= 2);
                for r in block * 4..block * 4 + 4 {
                    assert!(!bwd.get(r, l) || fwd.get(r, l));
                }
            }
        }
    }

    #[test]
    fn backward_error_paths() {
        let pat = p(2, 4);
        let w = random_matrix(4, 4, 1);
        let fwd = forward_mask(&w, pat).unwrap();
        let id = Permutation::identity(4);
        assert!(matches!(
            backward_mask(
                &w,
                &fwd,
                &id,
                BinarizationCriterion::GradientMagnitude,
                None
            ),
            Err(Error::MissingGradient)
        ));
        let w6 = random_matrix(6, 4, 1);
        let fwd6 = forward_mask(&w6, pat).unwrap();
        assert!(matches!(
            backward_mask(
                &w6,
                &fwd6,
                &Permutation::identity(6),
                BinarizationCriterion::WeightMagnitude,
                None
            ),
            Err(Error::Divisibility { .. })
        ));
        assert!(backward_mask(
            &w,
            &fwd,
            &Permutation::identity(8),
            BinarizationCriterion::WeightMagnitude,
            None
        )
        .is_err());
        let bad = Mask::new(Direction::Forward, pat, 4, 4, vec![true; 16]).unwrap();
        assert!(
            backward_mask(&w, &bad, &id, BinarizationCriterion::WeightMagnitude, None).is_err()
        );
    }

    #[test]
    fn sampling_criteria_are_seed_deterministic() {
        let pat = p(2, 4);
        let w = random_matrix(8, 8, 9);
        let fwd = forward_mask(&w, pat).unwrap();
        let id = Permutation::identity(8);
        for crit in [
            BinarizationCriterion::MultinomialSampling { seed: 3 },
            BinarizationCriterion::Random { seed: 3 },
        ] {
            let a = backward_mask(&w, &fwd, &id, crit, None).unwrap();
            let b = backward_mask(&w, &fwd, &id, crit, None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn proportional_sampling_falls_back_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut picked = sample_proportional(&mut rng, &[0.0, 5.0, 0.0, 0.0], 2);
        assert_eq!(picked[0], 1);
        picked.sort_unstable();
        picked.dedup();
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn mask_text_round_trip() {
        let w = random_matrix(4, 8, 2);
        let mask = forward_mask(&w, p(2, 4)).unwrap();
        assert_eq!(Mask::from_text(&mask.to_text()).unwrap(), mask);
        assert!(Mask::from_text("forward 2 4\n1 4\n1 1 1 2\n").is_err());
        assert!(Mask::from_text("sideways 2 4\n1 4\n1 1 0 0\n").is_err());
    }

    proptest! {
        #[test]
        fn forward_is_scale_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3) {
            let w = random_matrix(4, 8, seed);
            let a = forward_mask(&w, p(2, 4)).unwrap();
            let b = forward_mask(&w.scale(scale), p(2, 4)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn backward_never_exceeds_permuted_forward(seed in any::<u64>(), which in 0usize..4) {
            let pat = p(2, 4);
            let w = random_matrix(8, 8, seed);
            let g = random_matrix(8, 8, seed ^ 0xabc);
            let fwd = forward_mask(&w, pat).unwrap();
            let perm = Permutation::random(8, &mut ChaCha8Rng::seed_from_u64(seed));
            let crit = [
                BinarizationCriterion::WeightMagnitude,
                BinarizationCriterion::GradientMagnitude,
                BinarizationCriterion::MultinomialSampling { seed },
                BinarizationCriterion::Random { seed },
            ][which];
            let bwd = backward_mask(&w, &fwd, &perm, crit, Some(&g)).unwrap();
            prop_assert!(validate_mask(&bwd).is_empty());
            prop_assert!(bwd.is_subset_of(&fwd.permute_rows(perm.order())));
        }
    }
}
