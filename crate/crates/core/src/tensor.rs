//! Dense row-major matrices and the N:M pattern type.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::par;

/// An N:M sparsity pattern: at most `n` non-zeros in every `m` consecutive
/// entries along the blocked dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NmPattern {
    n: usize,
    m: usize,
}

impl NmPattern {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidPattern {
                n,
                m,
                reason: "M must be at least 2",
            });
        }
        if n == 0 || n > m {
            return Err(Error::InvalidPattern {
                n,
                m,
                reason: "N must satisfy 1 <= N <= M",
            });
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Fraction of entries kept by an exactly-N mask.
    pub fn density(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub(crate) fn check_divides(&self, dimension: &'static str, size: usize) -> Result<()> {
        if size % self.m != 0 {
            return Err(Error::Divisibility {
                dimension,
                size,
                m: self.m,
            });
        }
        Ok(())
    }
}

impl fmt::Display for NmPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.m)
    }
}

impl FromStr for NmPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("pattern must look like N:M, got {s:?}"));
        let (n, m) = s.trim().split_once(':').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        let m = m.trim().parse().map_err(|_| bad())?;
        NmPattern::new(n, m)
    }
}

/// Dense real matrix in row-major order. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(Error::ValueCount {
                rows,
                cols,
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols,
                col: pos % cols,
                value: values[pos],
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut values = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("row has {} values, expected {c}", row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(r, c, values)
    }

    /// Builds a matrix from a generator.
    ///
    /// Panics if a dimension is zero or the generator yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values).expect("from_fn produced an invalid matrix")
    }

    /// Panics if a dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Panics on a non-finite value.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(v.is_finite(), "non-finite value {v} at ({i}, {j})");
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn transpose(&self) -> Matrix {
        transpose(self)
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        matmul(self, rhs)
    }

    /// Elementwise map. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        Matrix::new(self.rows, self.cols, values).expect("map produced a non-finite value")
    }

    /// Elementwise combination of two equally shaped matrices.
    pub fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        self.check_same_shape(other, op)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix::new(self.rows, self.cols, values)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
    }

    /// Row `r` of the result is row `order[r]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Matrix {
        assert_eq!(order.len(), self.rows, "row order length");
        let mut values = Vec::with_capacity(self.values.len());
        for &src in order {
            values.extend_from_slice(self.row(src));
        }
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    /// Column `c` of the result is column `order[c]` of `self`.
    pub fn permute_cols(&self, order: &[usize]) -> Matrix {
        assert_eq!(order.len(), self.cols, "column order length");
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, order[j]))
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }

    /// Text form: a `rows cols` header, then one whitespace-separated row
    /// per line with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing `rows cols` header".into(),
        })?;
        let (rows, cols) = parse_dims(header, hline + 1)?;
        parse_body(lines, rows, cols, hline + 1, |tok, line| {
            tok.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("bad number {tok:?}: {e}"),
            })
        })
        .and_then(|values| Matrix::new(rows, cols, values))
    }
}

pub(crate) fn parse_dims(line: &str, lineno: usize) -> Result<(usize, usize)> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let bad = || Error::Parse {
        line: lineno,
        message: format!("expected `rows cols`, got {line:?}"),
    };
    if parts.len() != 2 {
        return Err(bad());
    }
    let rows = parts[0].parse().map_err(|_| bad())?;
    let cols = parts[1].parse().map_err(|_| bad())?;
    Ok((rows, cols))
}

pub(crate) fn parse_body<'a, T>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    rows: usize,
    cols: usize,
    header_line: usize,
    parse: impl Fn(&str, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let mut values = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if seen == rows {
            return Err(Error::Parse {
                line: lineno,
                message: format!("more than the declared {rows} rows"),
            });
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(parse(tok, lineno)?);
        }
        if values.len() - before != cols {
            return Err(Error::Parse {
                line: lineno,
                message: format!("row has {} values, expected {cols}", values.len() - before),
            });
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse {
            line: header_line,
            message: format!("declared {rows} rows, found {seen}"),
        });
    }
    Ok(values)
}

/// Standard matrix product. Each output entry sums its terms in ascending
/// inner index, independent of threading.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left_rows: a.rows,
            left_cols: a.cols,
            right_rows: b.rows,
            right_cols: b.cols,
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    let n = b.cols;
    par::for_each_chunk_mut(&mut out.values, n, |i, out_row| {
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    });
    Ok(out)
}

pub fn transpose(a: &Matrix) -> Matrix {
    let mut values = Vec::with_capacity(a.values.len());
    for j in 0..a.cols {
        for i in 0..a.rows {
            values.push(a.get(i, j));
        }
    }
    Matrix {
        rows: a.cols,
        cols: a.rows,
        values,
    }
}

/// The `n`-th largest value of `block`, counting ties by multiplicity.
pub fn top_n_threshold(block: &[f64], n: usize) -> Result<f64> {
    if n == 0 || n > block.len() {
        return Err(Error::RankOutOfRange {
            n,
            len: block.len(),
        });
    }
    if let Some(v) = block.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "top-N threshold expects magnitudes, got {v}"
        )));
    }
    let mut sorted = block.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[n - 1])
}
