use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// One dense horizontal slab of a coupling matrix, starting at row `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSlab {
    pub offset: usize,
    pub matrix: Matrix,
}

/// The linear coupling matrix `A_i` of one block (shape `rows x cols`).
///
/// Stored as non-overlapping dense row slabs so graph problems with tens of
/// thousands of coupling rows do not materialise mostly-zero matrices. A map
/// without slabs is the zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMap {
    rows: usize,
    cols: usize,
    slabs: Vec<RowSlab>,
}

impl CouplingMap {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            slabs: Vec::new(),
        }
    }

    pub fn dense(matrix: Matrix) -> Self {
        let (rows, cols) = matrix.shape();
        Self {
            rows,
            cols,
            slabs: if rows == 0 {
                Vec::new()
            } else {
                vec![RowSlab { offset: 0, matrix }]
            },
        }
    }

    pub fn from_slabs(rows: usize, cols: usize, mut slabs: Vec<RowSlab>) -> Result<Self> {
        slabs.sort_by_key(|s| s.offset);
        let mut next_free = 0;
        for s in &slabs {
            if s.matrix.ncols() != cols {
                return Err(Error::InvalidProblem(format!(
                    "slab at row {} has {} columns, expected {cols}",
                    s.offset,
                    s.matrix.ncols()
                )));
            }
            if s.offset < next_free {
                return Err(Error::InvalidProblem(format!(
                    "slab at row {} overlaps the previous slab",
                    s.offset
                )));
            }
            next_free = s.offset + s.matrix.nrows();
            if next_free > rows {
                return Err(Error::InvalidProblem(format!(
                    "slab at row {} extends past row {rows}",
                    s.offset
                )));
            }
        }
        Ok(Self { rows, cols, slabs })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn slabs(&self) -> &[RowSlab] {
        &self.slabs
    }

    pub fn is_zero(&self) -> bool {
        self.slabs.is_empty()
    }

    pub(crate) fn set_rows(&mut self, rows: usize) {
        debug_assert!(self.slabs.is_empty());
        self.rows = rows;
    }

    /// `out += A x`.
    pub fn apply_add(&self, x: &Vector, out: &mut Vector) {
        for s in &self.slabs {
            let r = s.matrix.nrows();
            let mut view = out.rows_mut(s.offset, r);
            view.gemv(1.0, &s.matrix, x, 1.0);
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.rows);
        self.apply_add(x, &mut out);
        out
    }

    /// `A' y`.
    pub fn transpose_apply(&self, y: &Vector) -> Vector {
        let mut out = Vector::zeros(self.cols);
        for s in &self.slabs {
            let part = y.rows(s.offset, s.matrix.nrows());
            out.gemv_tr(1.0, &s.matrix, &part, 1.0);
        }
        out
    }

    /// `A'A`, summed slab by slab (slabs never share rows).
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for s in &self.slabs {
            g += s.matrix.transpose() * &s.matrix;
        }
        g
    }

    /// Spectral norm `||A||_2`.
    pub fn spectral_norm(&self) -> f64 {
        if self.slabs.is_empty() || self.cols == 0 {
            return 0.0;
        }
        let top = self
            .gram()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(0.0, f64::max);
        top.max(0.0).sqrt()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for s in &self.slabs {
            m.rows_mut(s.offset, s.matrix.nrows()).copy_from(&s.matrix);
        }
        m
    }
}
