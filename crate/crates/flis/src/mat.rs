//! Dense row-major matrices sized for dictionary-scale problems.
//!
//! Everything in this crate works on matrices with at most a few hundred
//! rows or columns, so the kernels favor simple contiguous loops over
//! blocking. Rows are contiguous; all products are written so the inner
//! loop runs over a contiguous slice.

use crate::error::{FlisError, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn eye(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps `data` (row-major, length `rows * cols`).
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col_to_vec(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.at(r, c)).collect()
    }

    pub fn set_col(&mut self, c: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for (r, &x) in v.iter().enumerate() {
            *self.at_mut(r, c) = x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *t.at_mut(c, r) = self.at(r, c);
            }
        }
        t
    }

    /// `self * b`.
    pub fn mul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows, "inner dimensions differ");
        let mut c = Mat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let c_row = &mut c.data[i * b.cols..(i + 1) * b.cols];
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                axpy(aik, b.row(k), c_row);
            }
        }
        c
    }

    /// `self^T * b`, accumulated row by row so the inner loop is contiguous.
    pub fn tr_mul(&self, b: &Mat) -> Mat {
        assert_eq!(self.rows, b.rows, "row counts differ");
        let mut c = Mat::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = b.row(k);
            for (i, &aki) in a_row.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                axpy(aki, b_row, &mut c.data[i * b.cols..(i + 1) * b.cols]);
            }
        }
        c
    }

    /// `self * b^T`; both operands are walked along contiguous rows.
    pub fn mul_bt(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "column counts differ");
        let mut c = Mat::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..b.rows {
                *c.at_mut(i, j) = dot(a_row, b.row(j));
            }
        }
        c
    }

    /// `self * self^T`, filled symmetrically so `g[i][j]` and `g[j][i]` are
    /// bitwise equal.
    pub fn gram_rows(&self) -> Mat {
        let n = self.rows;
        let mut g = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                *g.at_mut(i, j) = v;
                *g.at_mut(j, i) = v;
            }
        }
        g
    }

    /// `self^T * self` (Gram of columns), bitwise symmetric.
    pub fn gram_cols(&self) -> Mat {
        // tr_mul(self, self) accumulates C[i][j] and C[j][i] from the same
        // products in the same order, so it is already bitwise symmetric.
        self.tr_mul(self)
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// `self += s * b`.
    pub fn add_scaled(&mut self, s: f64, b: &Mat) {
        assert_eq!((self.rows, self.cols), (b.rows, b.cols));
        axpy(s, &b.data, &mut self.data);
    }

    pub fn frob_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn col_norm(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self.at(r, c) * self.at(r, c)).sum::<f64>().sqrt()
    }

    pub fn scale_col(&mut self, c: usize, s: f64) {
        for r in 0..self.rows {
            *self.at_mut(r, c) *= s;
        }
    }

    /// Stacks `[self; b]` vertically.
    pub fn vstack(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "column counts differ");
        let mut data = Vec::with_capacity((self.rows + b.rows) * self.cols);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&b.data);
        Mat { rows: self.rows + b.rows, cols: self.cols, data }
    }

    /// Concatenates `[self b]` horizontally.
    pub fn hstack(&self, b: &Mat) -> Mat {
        assert_eq!(self.rows, b.rows, "row counts differ");
        let cols = self.cols + b.cols;
        let mut m = Mat::zeros(self.rows, cols);
        for r in 0..self.rows {
            m.data[r * cols..r * cols + self.cols].copy_from_slice(self.row(r));
            m.data[r * cols + self.cols..(r + 1) * cols].copy_from_slice(b.row(r));
        }
        m
    }

    /// Copies rows `[lo, hi)` into a new matrix.
    pub fn row_block(&self, lo: usize, hi: usize) -> Mat {
        assert!(lo <= hi && hi <= self.rows);
        Mat {
            rows: hi - lo,
            cols: self.cols,
            data: self.data[lo * self.cols..hi * self.cols].to_vec(),
        }
    }

    /// Copies columns `[lo, hi)` into a new matrix.
    pub fn col_block(&self, lo: usize, hi: usize) -> Mat {
        assert!(lo <= hi && hi <= self.cols);
        Mat::from_fn(self.rows, hi - lo, |r, c| self.at(r, lo + c))
    }

    pub fn max_abs_diff(&self, b: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (b.rows, b.cols));
        self.data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Dot product of equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `y += s * x` over equal-length slices.
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Validates that every entry of `m` is finite, for solver entry points.
pub fn require_finite(m: &Mat, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(FlisError::InvalidArgument(format!("{what} contains non-finite entries")))
    }
}
