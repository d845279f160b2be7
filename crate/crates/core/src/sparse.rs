//! Row-compressed sparse matrices with exact integer coefficients.
//!
//! Every real entry is `coeff * scale`. Products and sums are carried out on
//! the integer coefficients so that identities such as `curl * grad = 0` hold
//! bit-exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row count above which matrix-vector products run in parallel.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    coeffs: Vec<i64>,
    scale: f64,
}

impl SparseOperator {
    /// Builds from (row, col, coeff) triplets. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, i64)>,
        scale: f64,
    ) -> Self {
        let mut per_row: Vec<BTreeMap<usize, i64>> = vec![BTreeMap::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            *per_row[r].entry(c).or_insert(0) += v;
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut coeffs = Vec::new();
        indptr.push(0);
        for row in per_row {
            for (c, v) in row {
                if v != 0 {
                    indices.push(c);
                    coeffs.push(v);
                }
            }
            indptr.push(indices.len());
        }
        SparseOperator {
            rows,
            cols,
            indptr,
            indices,
            coeffs,
            scale,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1; n], 1.0)
    }

    pub fn diagonal(diag: &[i64], scale: f64) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &d)| (i, i, d)), scale)
    }

    pub fn zeros(rows: usize, cols: usize, scale: f64) -> Self {
        Self::from_triplets(rows, cols, std::iter::empty(), scale)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    /// Nonzero (column, coefficient) pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, i64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.coeffs[span].iter().copied())
    }

    /// Integer coefficient at (r, c).
    pub fn coeff(&self, r: usize, c: usize) -> i64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.coeffs[span.start + k],
            Err(_) => 0,
        }
    }

    /// Real entry at (r, c).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.coeff(r, c) as f64 * self.scale
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn max_abs_coeff(&self) -> i64 {
        self.coeffs.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Replaces the metric factor, keeping the integer pattern.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Overwrites one integer coefficient (inserting it if absent).
    pub fn set_coeff(&mut self, r: usize, c: usize, value: i64) {
        let trip: Vec<_> = self
            .triplets()
            .filter(|&(i, j, _)| (i, j) != (r, c))
            .chain(std::iter::once((r, c, value)))
            .collect();
        *self = Self::from_triplets(self.rows, self.cols, trip, self.scale);
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut coeffs = vec![0; self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                indices[slot] = r;
                coeffs[slot] = v;
                next[c] += 1;
            }
        }
        SparseOperator {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            coeffs,
            scale: self.scale,
        }
    }

    /// Product in integer arithmetic; the scales multiply.
    pub fn matmul(&self, other: &SparseOperator) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::InvalidArgument(format!(
                "shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut coeffs = Vec::new();
        indptr.push(0);
        let mut acc = vec![0i64; other.cols];
        let mut touched = vec![false; other.cols];
        let mut cols_hit: Vec<usize> = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols_hit.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols_hit.sort_unstable();
            for &c in &cols_hit {
                if acc[c] != 0 {
                    indices.push(c);
                    coeffs.push(acc[c]);
                }
                acc[c] = 0;
                touched[c] = false;
            }
            cols_hit.clear();
            indptr.push(indices.len());
        }
        Ok(SparseOperator {
            rows: self.rows,
            cols: other.cols,
            indptr,
            indices,
            coeffs,
            scale: self.scale * other.scale,
        })
    }

    /// Sum of two operators sharing the same metric factor.
    pub fn add(&self, other: &SparseOperator) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::InvalidArgument("shape mismatch in add".into()));
        }
        if self.scale != other.scale {
            return Err(Error::InvalidArgument(format!(
                "cannot add operators with scales {} and {}",
                self.scale, other.scale
            )));
        }
        Ok(Self::from_triplets(
            self.rows,
            self.cols,
            self.triplets().chain(other.triplets()),
            self.scale,
        ))
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let trip: Vec<_> = keep
            .iter()
            .enumerate()
            .flat_map(|(new, &old)| self.row(old).map(move |(c, v)| (new, c, v)))
            .collect();
        Self::from_triplets(keep.len(), self.cols, trip, self.scale)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_cols(&self, keep: &[usize]) -> Self {
        self.transpose().select_rows(keep).transpose()
    }

    /// Exact structural and coefficient symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Largest |A - A^T| coefficient.
    pub fn asymmetry(&self) -> i64 {
        if self.rows != self.cols {
            return i64::MAX;
        }
        let t = self.transpose();
        SparseOperator::from_triplets(
            self.rows,
            self.cols,
            self.triplets().chain(t.triplets().map(|(r, c, v)| (r, c, -v))),
            self.scale,
        )
        .max_abs_coeff()
    }

    /// y = A x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        let row_dot = |r: usize| -> f64 {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.coeffs[k] as f64 * x[self.indices[k]];
            }
            s * self.scale
        };
        if self.rows >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, out)| *out = row_dot(r));
        } else {
            y.iter_mut().enumerate().for_each(|(r, out)| *out = row_dot(r));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply(x, &mut y);
        y
    }

    /// y = A x over integers.
    pub fn mul_vec_int(&self, x: &[i64]) -> Vec<i64> {
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v as f64 * self.scale;
        }
        m
    }

    /// Writes the real entries in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "% integer coefficients times scale {:e}", self.scale)?;
        writeln!(out, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v as f64 * self.scale)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseOperator {
        SparseOperator::from_triplets(
            2,
            3,
            vec![(0, 0, 1), (0, 2, -1), (1, 1, 2), (1, 1, 1), (1, 0, 0)],
            0.5,
        )
    }

    #[test]
    fn triplets_are_summed_and_zeros_dropped() {
        let a = sample();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.coeff(1, 1), 3);
        assert_eq!(a.get(0, 2), -0.5);
        assert_eq!(a.coeff(1, 0), 0);
    }

    #[test]
    fn transpose_and_product() {
        let a = sample();
        let t = a.transpose();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.coeff(2, 0), -1);
        assert_eq!(t.transpose(), a);
        let g = a.matmul(&t).unwrap();
        assert_eq!(g.scale(), 0.25);
        assert_eq!(g.coeff(0, 0), 2);
        assert_eq!(g.coeff(1, 1), 9);
        assert_eq!(g.coeff(0, 1), 0);
        assert!(g.is_symmetric());
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn add_requires_equal_scale() {
        let a = sample();
        assert!(a.add(&a.clone().with_scale(1.0)).is_err());
        let s = a.add(&a).unwrap();
        assert_eq!(s.coeff(1, 1), 6);
    }

    #[test]
    fn row_and_column_selection() {
        let a = sample();
        let r = a.select_rows(&[1]);
        assert_eq!(r.rows(), 1);
        assert_eq!(r.coeff(0, 1), 3);
        let c = a.select_cols(&[2, 0]);
        assert_eq!(c.cols(), 2);
        assert_eq!(c.coeff(0, 0), -1);
        assert_eq!(c.coeff(0, 1), 1);
    }

    #[test]
    fn apply_matches_dense() {
        let a = sample();
        let x = [1.0, 2.0, 3.0];
        let y = a.mul_vec(&x);
        let d = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        assert_eq!(y, d.as_slice());
        assert_eq!(a.mul_vec_int(&[1, 2, 3]), vec![-2, 6]);
    }

    #[test]
    fn asymmetry_detects_corruption() {
        let mut s = SparseOperator::diagonal(&[1, 2, 3], 1.0);
        assert_eq!(s.asymmetry(), 0);
        s.set_coeff(0, 2, 5);
        assert_eq!(s.asymmetry(), 5);
        assert!(!s.is_symmetric());
    }

    #[test]
    fn matrix_market_dump() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        sample().write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("%%MatrixMarket matrix coordinate real general"));
        lines.next();
        assert_eq!(lines.next(), Some("2 3 3"));
        let first: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(first[..2], ["1", "1"]);
        assert_eq!(first[2].parse::<f64>().unwrap(), 0.5);
    }
}
