//! Square dense matrix stored column-major.
//!
//! Every access pattern in this crate reads or writes whole columns of the
//! value matrix (one column per input token), so columns are contiguous.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    side: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(side: usize) -> Self {
        Matrix {
            side,
            data: vec![0.0; side * side],
        }
    }

    /// Builds a matrix from column-major data.
    pub fn from_col_major(side: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), side * side, "matrix data has wrong length");
        Matrix { side, data }
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(side);
        for col in 0..side {
            for row in 0..side {
                m.data[col * side + row] = f(row, col);
            }
        }
        m
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.side + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.side + row] = value;
    }

    #[inline]
    pub fn add_at(&mut self, row: usize, col: usize, delta: f64) {
        self.data[col * self.side + row] += delta;
    }

    #[inline]
    pub fn col(&self, col: usize) -> &[f64] {
        &self.data[col * self.side..(col + 1) * self.side]
    }

    #[inline]
    pub fn col_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.side..(col + 1) * self.side]
    }

    pub fn as_col_major(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_scalar(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x += c);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!(self.side, other.side);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += alpha * y;
        }
    }

    /// Iterates over `(row, col, value)` for every nonzero entry.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let side = self.side;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(i, v)| (i % side, i / side, *v))
    }
}
