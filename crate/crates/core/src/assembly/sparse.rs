//! Sparse assembly helpers and a symmetric positive definite direct solver
//! (reverse Cuthill-McKee ordering followed by sparse Cholesky).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Coordinate-format accumulator; duplicates are summed on compression.
pub struct Triplets<T: Scalar> {
    coo: CooMatrix<T>,
}

impl<T: Scalar> Triplets<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { coo: CooMatrix::new(nrows, ncols) }
    }

    pub fn push(&mut self, i: usize, j: usize, v: T) {
        self.coo.push(i, j, v);
    }

    /// Adds a dense block with row and column index maps, skipping exact zeros.
    pub fn add_block(&mut self, rows: &[usize], cols: &[usize], block: &DMatrix<T>) {
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                let v = block[(a, b)];
                if v != T::zero() {
                    self.coo.push(i, j, v);
                }
            }
        }
    }

    pub fn to_csr(&self) -> CsrMatrix<T> {
        CsrMatrix::from(&self.coo)
    }

    pub fn to_csc(&self) -> CscMatrix<T> {
        CscMatrix::from(&self.coo)
    }
}

pub fn spmv<T: Scalar>(a: &CsrMatrix<T>, x: &DVector<T>) -> DVector<T> {
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        let mut s = T::zero();
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            s += v * x[j];
        }
        y[i] = s;
    }
    y
}

pub fn spmv_transpose<T: Scalar>(a: &CsrMatrix<T>, x: &DVector<T>) -> DVector<T> {
    let mut y = DVector::zeros(a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        let xi = x[i];
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            y[j] += v * xi;
        }
    }
    y
}

pub fn to_dense<T: Scalar>(a: &CsrMatrix<T>) -> DMatrix<T> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            d[(i, j)] += v;
        }
    }
    d
}

/// Reverse Cuthill-McKee ordering of a structurally symmetric pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).nnz()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> =
                a.row(v).col_indices().iter().copied().filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factorization of a sparse SPD matrix under an RCM permutation.
pub struct SpdFactor<T: Scalar> {
    perm: Vec<usize>,
    factor: Option<CscCholesky<T>>,
}

impl<T: Scalar> SpdFactor<T> {
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Ok(Self { perm: Vec::new(), factor: None });
        }
        let perm = rcm_ordering(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut coo = CooMatrix::new(n, n);
        for (i, row) in a.row_iter().enumerate() {
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                coo.push(inv[i], inv[j], v);
            }
        }
        let csc = CscMatrix::from(&coo);
        let factor = CscCholesky::factor(&csc).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self { perm, factor: Some(factor) })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let Some(factor) = &self.factor else {
            return DVector::zeros(0);
        };
        let pb = DMatrix::from_fn(b.len(), 1, |i, _| b[self.perm[i]]);
        let y = factor.solve(&pb);
        let mut x = DVector::zeros(b.len());
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[(new, 0)];
        }
        x
    }
}
