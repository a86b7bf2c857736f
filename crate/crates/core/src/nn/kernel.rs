use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Dense kernel block `Theta(x_i, x_j)` stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(rows: Vec<usize>, cols: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(rows.len() * cols.len(), values.len(), "kernel values do not match its index lists");
        Self { rows, cols, values }
    }

    /// Square block over examples `0..n`.
    pub fn square(n: usize, values: Vec<f64>) -> Self {
        Self::new((0..n).collect(), (0..n).collect(), values)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols.len()..(i + 1) * self.cols.len()]
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.len().min(self.cols.len())).map(|i| self.get(i, i)).sum()
    }

    /// `K v` for a vector over the columns.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_cols());
        (0..self.n_rows()).map(|i| crate::math::dot(self.row(i), v)).collect()
    }

    /// Largest `|K_ij - K_ji|`.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.n_rows() == self.n_cols());
        let n = self.n_rows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max(crate::math::abs(self.get(i, j) - self.get(j, i)));
            }
        }
        worst
    }

    /// Mean of `|self - other|` over all entries.
    pub fn mean_abs_diff(&self, other: &KernelMatrix) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        if self.values.is_empty() {
            return 0.0;
        }
        let total: f64 = self.values.iter().zip(&other.values).map(|(a, b)| crate::math::abs(a - b)).sum();
        total / self.values.len() as f64
    }
}
