//! Dense binary BS x UE matrices used for association and coordination.

use std::fmt;

use crate::error::{Error, Result};

/// A dense 0/1 matrix, rows indexed by BS and columns by UE.
///
/// Ordering is lexicographic over the row-major bit sequence, which is what
/// the optimizers use to break ties deterministically.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.bits[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        self.bits[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        self.bits[r * self.cols + c] = v;
    }

    pub fn with(mut self, r: usize, c: usize, v: bool) -> Self {
        self.set(r, c, v);
        self
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn row_count(&self, r: usize) -> usize {
        self.bits[r * self.cols..(r + 1) * self.cols]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    pub fn col_count(&self, c: usize) -> usize {
        (0..self.rows).filter(|&r| self.get(r, c)).count()
    }

    /// Columns set in row `r`, ascending.
    pub fn row_ones(&self, r: usize) -> Vec<usize> {
        (0..self.cols).filter(|&c| self.get(r, c)).collect()
    }

    /// Rows set in column `c`, ascending.
    pub fn col_ones(&self, c: usize) -> Vec<usize> {
        (0..self.rows).filter(|&r| self.get(r, c)).collect()
    }

    /// First set row of column `c`: the serving BS when `self` is an association.
    pub fn first_in_col(&self, c: usize) -> Option<usize> {
        (0..self.rows).find(|&r| self.get(r, c))
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / self.cols, k % self.cols))
    }

    pub fn or(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a || b)
    }

    pub fn and(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && b)
    }

    /// Elementwise `self <= other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.same_shape(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn hamming(&self, other: &Self) -> usize {
        assert!(self.same_shape(other), "shape mismatch");
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn zip(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert!(self.same_shape(other), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Inserts an all-zero column at `c`.
    pub fn insert_col(&self, c: usize) -> Self {
        assert!(c <= self.cols);
        Self::from_fn(self.rows, self.cols + 1, |r, k| match k.cmp(&c) {
            std::cmp::Ordering::Less => self.get(r, k),
            std::cmp::Ordering::Equal => false,
            std::cmp::Ordering::Greater => self.get(r, k - 1),
        })
    }

    pub fn remove_col(&self, c: usize) -> Self {
        assert!(c < self.cols);
        Self::from_fn(self.rows, self.cols - 1, |r, k| {
            self.get(r, if k < c { k } else { k + 1 })
        })
    }

    /// Row-major bits as `0.0`/`1.0`, the learned models' input encoding.
    pub fn as_f64s(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 })
    }

    /// Row-major `0`/`1` string without separators.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(rows: usize, cols: usize, s: &str) -> Result<Self> {
        if s.len() != rows * cols {
            return Err(Error::Parse(format!(
                "expected {} bits for a {rows}x{cols} matrix, got {}",
                rows * cols,
                s.len()
            )));
        }
        let bits = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("invalid bit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows, cols, bits })
    }

    /// One line per row, `0`/`1` characters, newline-separated.
    pub fn to_grid(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(if self.get(r, c) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_grid(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let cols = lines.first().map_or(0, |l| l.len());
        if lines.iter().any(|l| l.len() != cols) {
            return Err(Error::Parse("ragged 0/1 grid".into()));
        }
        Self::from_bit_string(lines.len(), cols, &lines.concat())
    }
}

impl fmt::Debug for BinMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BinMatrix {}x{}", self.rows, self.cols)?;
        f.write_str(&self.to_grid())
    }
}

impl fmt::Display for BinMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_grid())
    }
}
