//! Row permutations of the masked weights and the search for one that
//! maximizes column blocks already satisfying N:M.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Matrix, NmPattern};

/// Largest row count accepted by [`brute_force_best_permutation`].
pub const BRUTE_FORCE_MAX_ROWS: usize = 8;

/// A bijection over row indices: position `r` of the permuted matrix holds
/// original row `order[r]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() {
                return Err(Error::InvalidPermutation(format!(
                    "index {i} out of range for {} rows",
                    order.len()
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("index {i} repeated")));
            }
        }
        Ok(Self { order })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    /// Uniform random permutation (Fisher–Yates).
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &o)| i == o)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.order.len()];
        for (pos, &src) in self.order.iter().enumerate() {
            inv[src] = pos;
        }
        Self { order: inv }
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.order.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Outcome of a permutation search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub chosen: Permutation,
    pub eligible_blocks: usize,
    pub total_blocks: usize,
    /// Eligible blocks under the permutation the search started from.
    pub incumbent_eligible: usize,
    pub candidates_evaluated: usize,
    pub elapsed_seconds: f64,
}

impl SearchReport {
    pub const CSV_HEADER: &'static str =
        "eligible_blocks,total_blocks,incumbent_eligible,candidates_evaluated,elapsed_seconds,chosen";

    pub fn eligible_ratio(&self) -> f64 {
        self.eligible_blocks as f64 / self.total_blocks as f64
    }

    /// One CSV row; the chosen order is space-separated.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{}",
            self.eligible_blocks,
            self.total_blocks,
            self.incumbent_eligible,
            self.candidates_evaluated,
            self.elapsed_seconds,
            self.chosen
        )
    }
}

/// Non-zero column indices per row, for counting eligible blocks under many
/// candidate permutations.
#[derive(Debug, Clone)]
pub struct EligibilityCounter {
    n: usize,
    m: usize,
    rows: usize,
    cols: usize,
    support: Vec<Vec<u32>>,
}

impl EligibilityCounter {
    pub fn new(masked_w: &Matrix, pattern: NmPattern) -> Result<Self> {
        pattern.check_divides("masked weight rows", masked_w.rows())?;
        let support = (0..masked_w.rows())
            .map(|i| {
                masked_w
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, _)| j as u32)
                    .collect()
            })
            .collect();
        Ok(Self {
            n: pattern.n(),
            m: pattern.m(),
            rows: masked_w.rows(),
            cols: masked_w.cols(),
            support,
        })
    }

    pub fn total_blocks(&self) -> usize {
        self.rows / self.m * self.cols
    }

    /// Eligible column blocks of the matrix with rows reordered by `perm`.
    pub fn eligible(&self, perm: &Permutation) -> usize {
        let mut counts = vec![0u32; self.total_blocks()];
        for (pos, &src) in perm.order().iter().enumerate() {
            let base = pos / self.m * self.cols;
            for &c in &self.support[src] {
                counts[base + c as usize] += 1;
            }
        }
        counts.iter().filter(|&&c| c as usize <= self.n).count()
    }
}

/// `(eligible, total)` column blocks of `masked_w`: a block of M rows in one
/// column is eligible when it holds at most N non-zeros.
pub fn count_eligible_blocks(masked_w: &Matrix, pattern: NmPattern) -> Result<(usize, usize)> {
    let counter = EligibilityCounter::new(masked_w, pattern)?;
    Ok((
        counter.eligible(&Permutation::identity(masked_w.rows())),
        counter.total_blocks(),
    ))
}

/// Evaluates `current` followed by `k` uniformly random permutations drawn
/// from `seed` and keeps the one with the most eligible blocks. Ties go to
/// the earliest evaluated, so the incumbent wins them.
pub fn search_permutation(
    masked_w: &Matrix,
    pattern: NmPattern,
    k: usize,
    current: &Permutation,
    seed: u64,
) -> Result<SearchReport> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "permutation search needs k >= 1 candidates".into(),
        ));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Permutation> = (0..k)
        .map(|_| Permutation::random(masked_w.rows(), &mut rng))
        .collect();
    let mut report = search_candidates(masked_w, pattern, current, &candidates)?;
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Like [`search_permutation`] with an explicit candidate list.
pub fn search_candidates(
    masked_w: &Matrix,
    pattern: NmPattern,
    current: &Permutation,
    candidates: &[Permutation],
) -> Result<SearchReport> {
    let start = Instant::now();
    if current.len() != masked_w.rows() {
        return Err(Error::InvalidPermutation(format!(
            "incumbent covers {} rows, matrix has {}",
            current.len(),
            masked_w.rows()
        )));
    }
    if let Some(bad) = candidates.iter().find(|c| c.len() != masked_w.rows()) {
        return Err(Error::InvalidPermutation(format!(
            "candidate covers {} rows, matrix has {}",
            bad.len(),
            masked_w.rows()
        )));
    }
    let counter = EligibilityCounter::new(masked_w, pattern)?;
    let incumbent_eligible = counter.eligible(current);
    let scores = par::map_slice(candidates, |c| counter.eligible(c));
    let mut best = (incumbent_eligible, None);
    for (i, &s) in scores.iter().enumerate() {
        if s > best.0 {
            best = (s, Some(i));
        }
    }
    Ok(SearchReport {
        chosen: best
            .1
            .map_or_else(|| current.clone(), |i| candidates[i].clone()),
        eligible_blocks: best.0,
        total_blocks: counter.total_blocks(),
        incumbent_eligible,
        candidates_evaluated: candidates.len() + 1,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Every permutation of `0..n` in lexicographic order. `n` <= 8.
pub fn all_permutations(n: usize) -> Result<Vec<Permutation>> {
    if n > BRUTE_FORCE_MAX_ROWS {
        return Err(too_many_rows(n));
    }
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        out.push(Permutation {
            order: order.clone(),
        });
        if !next_lexicographic(&mut order) {
            return Ok(out);
        }
    }
}

/// Exact argmax over all row orders, first in lexicographic order on ties
/// (so the identity wins when everything ties). At most 8 rows.
pub fn brute_force_best_permutation(masked_w: &Matrix, pattern: NmPattern) -> Result<SearchReport> {
    let start = Instant::now();
    let rows = masked_w.rows();
    if rows > BRUTE_FORCE_MAX_ROWS {
        return Err(too_many_rows(rows));
    }
    let counter = EligibilityCounter::new(masked_w, pattern)?;
    // One lexicographic run per leading row; concatenated they cover all
    // orders in lexicographic order.
    let per_lead = par::map_range(rows, |lead| {
        let mut order: Vec<usize> = std::iter::once(lead)
            .chain((0..rows).filter(|&r| r != lead))
            .collect();
        let mut best: Option<(usize, Vec<usize>)> = None;
        let mut evaluated = 0usize;
        loop {
            let score = counter.eligible(&Permutation {
                order: order.clone(),
            });
            evaluated += 1;
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, order.clone()));
            }
            if !next_lexicographic(&mut order[1..]) {
                break;
            }
        }
        (best.expect("at least one order"), evaluated)
    });
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut evaluated = 0;
    for (candidate, count) in per_lead {
        evaluated += count;
        if best.as_ref().is_none_or(|(b, _)| candidate.0 > *b) {
            best = Some(candidate);
        }
    }
    let (eligible_blocks, order) = best.expect("rows >= 1");
    Ok(SearchReport {
        chosen: Permutation { order },
        eligible_blocks,
        total_blocks: counter.total_blocks(),
        incumbent_eligible: counter.eligible(&Permutation::identity(rows)),
        candidates_evaluated: evaluated,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

fn too_many_rows(rows: usize) -> Error {
    Error::Infeasible {
        what: "brute-force permutation search",
        note: format!(
            "{rows} rows means {rows}! orders; supported up to {BRUTE_FORCE_MAX_ROWS} rows"
        ),
    }
}

fn next_lexicographic(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len())
        .rev()
        .find(|&j| v[j] > v[i])
        .expect("successor exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}
