//! Minimal dense row-major `f64` matrix shared by the vector-space stages.

use thiserror::Error;

/// Error raised when rows of inconsistent width are combined.
#[derive(Debug, Error)]
pub enum MatrixError {
    /// A row's length differs from the matrix width.
    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
}

/// Dense row-major matrix of `f64` values.
///
/// Rows are embedding vectors, centroids, or 2-D map points depending on the
/// caller; all numeric kernels in this crate operate on `&[f64]` row slices.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    /// An `n_rows x n_cols` matrix of zeros.
    #[must_use]
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Builds a matrix from equally sized rows.
    ///
    /// # Errors
    ///
    /// Returns [`MatrixError::RaggedRow`] if any row's length differs from the
    /// first row's.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(MatrixError::RaggedRow {
                    row: i,
                    found: row.len(),
                    expected: n_cols,
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    #[must_use]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[must_use]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Row `i` as a slice of length `n_cols`.
    ///
    /// # Panics
    ///
    /// Panics if `i >= n_rows`.
    #[must_use]
    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.n_cols;
        &self.data[start..start + self.n_cols]
    }

    /// Mutable view of row `i`.
    ///
    /// # Panics
    ///
    /// Panics if `i >= n_rows`.
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let start = i * self.n_cols;
        &mut self.data[start..start + self.n_cols]
    }

    /// Overwrites row `i` with `values`.
    ///
    /// # Panics
    ///
    /// Panics if `i >= n_rows` or `values.len() != n_cols`.
    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        self.row_mut(i).copy_from_slice(values);
    }

    /// The backing row-major buffer.
    #[must_use]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable backing buffer (row-major).
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Iterator over row slices in order.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    /// Sum of squared element-wise differences against `other`.
    ///
    /// Used as the convergence measure between successive centroid matrices.
    ///
    /// # Panics
    ///
    /// Panics if shapes differ.
    #[must_use]
    pub fn squared_distance_to(&self, other: &Self) -> f64 {
        assert_eq!(self.n_rows, other.n_rows, "row count mismatch");
        assert_eq!(self.n_cols, other.n_cols, "column count mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}
