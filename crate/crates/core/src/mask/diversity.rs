//! Mask diversity: how many distinct masks a family admits on one tile.
//!
//! Counting follows the exactly-N row convention the generators use. A
//! vanilla tile of `r` rows has `C(M, N)^r` masks. A transposable M×M tile
//! additionally caps every column at N, which with exactly N per row forces
//! exactly N per column.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::tensor::NmPattern;

/// Largest M handled by column-profile counting.
pub const PROFILE_MAX_M: usize = 16;

/// Patterns tabulated by [`diversity_table`].
pub const DIVERSITY_TABLE_PATTERNS: [(usize, usize); 6] =
    [(1, 4), (2, 4), (1, 8), (2, 8), (4, 8), (1, 16)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiversityFamily {
    Vanilla,
    Transposable,
}

impl fmt::Display for DiversityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiversityFamily::Vanilla => "vanilla",
            DiversityFamily::Transposable => "transposable",
        })
    }
}

impl FromStr for DiversityFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Self::Vanilla),
            "transposable" => Ok(Self::Transposable),
            other => Err(Error::InvalidArgument(format!(
                "unknown diversity family {other:?}"
            ))),
        }
    }
}

/// Number of distinct masks for one tile. Transposable tiles are M×M, so
/// `tile_rows` must equal M for that family.
pub fn mask_diversity(
    pattern: NmPattern,
    family: DiversityFamily,
    tile_rows: usize,
) -> Result<BigUint> {
    if tile_rows == 0 {
        return Err(Error::InvalidArgument(
            "tile_rows must be at least 1".into(),
        ));
    }
    match family {
        DiversityFamily::Vanilla => Ok(binomial(pattern.m(), pattern.n()).pow(tile_rows as u32)),
        DiversityFamily::Transposable => {
            if tile_rows != pattern.m() {
                return Err(Error::InvalidArgument(format!(
                    "transposable tiles are {m}x{m}; got tile_rows = {tile_rows}",
                    m = pattern.m()
                )));
            }
            if pattern.m() <= 4 {
                transposable_diversity_by_enumeration(pattern).map(BigUint::from)
            } else {
                transposable_diversity_by_profiles(pattern)
            }
        }
    }
}

/// Counts transposable tiles by checking all `2^(M*M)` binary tiles. M <= 4.
pub fn transposable_diversity_by_enumeration(pattern: NmPattern) -> Result<u64> {
    let (n, m) = (pattern.n(), pattern.m());
    if m > 4 {
        return Err(Error::Infeasible {
            what: "exhaustive diversity enumeration",
            note: format!("M = {m} needs 2^{} tiles; supported up to M = 4", m * m),
        });
    }
    let row_mask = (1u32 << m) - 1;
    let mut count = 0;
    for bits in 0u32..1 << (m * m) {
        let rows_ok = (0..m).all(|r| ((bits >> (r * m)) & row_mask).count_ones() as usize == n);
        if !rows_ok {
            continue;
        }
        let cols_ok = (0..m).all(|c| (0..m).filter(|&r| bits >> (r * m + c) & 1 == 1).count() <= n);
        if cols_ok {
            count += 1;
        }
    }
    Ok(count)
}

/// Counts transposable tiles row by row over column-capacity profiles: the
/// state records how many columns have each remaining capacity. M <= 16.
pub fn transposable_diversity_by_profiles(pattern: NmPattern) -> Result<BigUint> {
    let (n, m) = (pattern.n(), pattern.m());
    if m > PROFILE_MAX_M {
        return Err(Error::Infeasible {
            what: "transposable diversity counting",
            note: format!("M = {m} exceeds the supported maximum of {PROFILE_MAX_M}"),
        });
    }
    // profile[c] = number of columns with capacity c left
    let mut start = vec![0u8; n + 1];
    start[n] = m as u8;
    let mut states: HashMap<Vec<u8>, BigUint> = HashMap::from([(start, BigUint::one())]);
    for _ in 0..m {
        let mut next: HashMap<Vec<u8>, BigUint> = HashMap::new();
        for (profile, ways) in &states {
            let mut take = vec![0u8; n + 1];
            spread_row(
                profile,
                &mut take,
                n,
                n,
                BigUint::one(),
                &mut |take, mult| {
                    let mut np = profile.clone();
                    for c in 1..=n {
                        np[c] -= take[c];
                        np[c - 1] += take[c];
                    }
                    *next.entry(np).or_insert_with(BigUint::zero) += ways * &mult;
                },
            );
        }
        states = next;
    }
    Ok(states.into_values().sum())
}

/// Enumerates ways to place `left` ones of one row over capacity classes
/// `1..=class`, calling `emit` with per-class counts and their multiplicity.
fn spread_row(
    profile: &[u8],
    take: &mut [u8],
    class: usize,
    left: usize,
    mult: BigUint,
    emit: &mut impl FnMut(&[u8], BigUint),
) {
    if left == 0 {
        emit(take, mult);
        return;
    }
    if class == 0 {
        return;
    }
    let avail = profile[class] as usize;
    for k in 0..=avail.min(left) {
        take[class] = k as u8;
        spread_row(
            profile,
            take,
            class - 1,
            left - k,
            &mult * binomial(avail, k),
            emit,
        );
    }
    take[class] = 0;
}

pub(crate) fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// One line of the vanilla-versus-transposable comparison on an M×M tile.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityRow {
    pub pattern: NmPattern,
    pub vanilla: BigUint,
    pub transposable: BigUint,
}

impl DiversityRow {
    /// `log10(vanilla / transposable)`.
    pub fn log10_ratio(&self) -> f64 {
        log10_big(&self.vanilla) - log10_big(&self.transposable)
    }
}

fn log10_big(v: &BigUint) -> f64 {
    let digits = v.to_string();
    let lead: f64 = digits[..digits.len().min(15)].parse().unwrap_or(0.0);
    lead.log10() + (digits.len().saturating_sub(15)) as f64
}

pub fn diversity_table() -> Result<Vec<DiversityRow>> {
    DIVERSITY_TABLE_PATTERNS
        .iter()
        .map(|&(n, m)| {
            let pattern = NmPattern::new(n, m)?;
            Ok(DiversityRow {
                pattern,
                vanilla: mask_diversity(pattern, DiversityFamily::Vanilla, m)?,
                transposable: mask_diversity(pattern, DiversityFamily::Transposable, m)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize, m: usize) -> NmPattern {
        NmPattern::new(n, m).unwrap()
    }

    /// Independent oracle: rows one at a time over the ordered vector of
    /// per-column usage, memoized.
    fn ordered_count(n: usize, m: usize) -> u128 {
        fn rec(
            row: usize,
            used: &mut Vec<usize>,
            n: usize,
            m: usize,
            memo: &mut HashMap<(usize, Vec<usize>), u128>,
        ) -> u128 {
            if row == m {
                return 1;
            }
            if let Some(&v) = memo.get(&(row, used.clone())) {
                return v;
            }
            let mut total = 0;
            for set in 0u32..1 << m {
                if set.count_ones() as usize != n {
                    continue;
                }
                if (0..m).any(|c| set >> c & 1 == 1 && used[c] == n) {
                    continue;
                }
                for c in 0..m {
                    if set >> c & 1 == 1 {
                        used[c] += 1;
                    }
                }
                total += rec(row + 1, used, n, m, memo);
                for c in 0..m {
                    if set >> c & 1 == 1 {
                        used[c] -= 1;
                    }
                }
            }
            memo.insert((row, used.clone()), total);
            total
        }
        rec(0, &mut vec![0; m], n, m, &mut HashMap::new())
    }

    #[test]
    fn vanilla_single_row_counts() {
        assert_eq!(
            mask_diversity(p(2, 4), DiversityFamily::Vanilla, 1).unwrap(),
            BigUint::from(6u32)
        );
        assert_eq!(
            mask_diversity(p(1, 4), DiversityFamily::Vanilla, 1).unwrap(),
            BigUint::from(4u32)
        );
        assert_eq!(
            mask_diversity(p(2, 4), DiversityFamily::Vanilla, 4).unwrap(),
            BigUint::from(1296u32)
        );
    }

    #[test]
    fn transposable_small_tiles() {
        // 4x4 binary matrices with two ones in every row and column
        assert_eq!(ordered_count(2, 4), 90);
        assert_eq!(transposable_diversity_by_enumeration(p(2, 4)).unwrap(), 90);
        // permutation matrices
        assert_eq!(transposable_diversity_by_enumeration(p(1, 4)).unwrap(), 24);
        assert_eq!(transposable_diversity_by_enumeration(p(4, 4)).unwrap(), 1);
    }

    #[test]
    fn profiles_agree_with_enumeration() {
        for m in 2..=4 {
            for n in 1..=m {
                let pat = p(n, m);
                assert_eq!(
                    transposable_diversity_by_profiles(pat).unwrap(),
                    BigUint::from(transposable_diversity_by_enumeration(pat).unwrap()),
                    "{pat}"
                );
            }
        }
    }

    #[test]
    fn profiles_agree_with_ordered_oracle() {
        for (n, m) in [(2, 5), (2, 6), (3, 6), (2, 8), (4, 8)] {
            let oracle = ordered_count(n, m);
            assert_eq!(
                transposable_diversity_by_profiles(p(n, m)).unwrap(),
                BigUint::from(oracle),
                "{n}:{m}"
            );
        }
        assert_eq!(ordered_count(2, 8), 187_530_840);
        assert_eq!(ordered_count(4, 8), 116_963_796_250);
    }

    #[test]
    fn one_of_sixteen_is_sixteen_factorial() {
        let fact: BigUint = (1u32..=16).map(BigUint::from).product();
        assert_eq!(
            mask_diversity(p(1, 16), DiversityFamily::Transposable, 16).unwrap(),
            fact
        );
    }

    #[test]
    fn range_checks() {
        assert!(transposable_diversity_by_enumeration(p(2, 8)).is_err());
        assert!(mask_diversity(p(2, 4), DiversityFamily::Transposable, 3).is_err());
        assert!(mask_diversity(p(1, 17), DiversityFamily::Transposable, 17).is_err());
        assert!(mask_diversity(p(2, 4), DiversityFamily::Vanilla, 0).is_err());
    }

    #[test]
    fn table_orders_transposable_below_vanilla() {
        let table = diversity_table().unwrap();
        assert_eq!(table.len(), 6);
        for row in &table {
            assert!(row.transposable < row.vanilla, "{}", row.pattern);
            assert!(row.log10_ratio() > 0.0);
        }
    }
}
