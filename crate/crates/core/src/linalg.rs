//! Compressed sparse row storage plus a thin wrapper over faer's sparse LU.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Square sparse matrix in CSR form with sorted, de-duplicated columns.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self { n, indptr, indices, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Iterates `(col, value)` over row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()].iter().copied().zip(self.data[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `x^T A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>()).sum()
    }

    /// Triplets of `self + diag(d)` restricted to the rows/columns where
    /// `keep[i]` is `Some(new_index)`.
    fn restricted_triplets(&self, diag: &[f64], keep: &[Option<usize>]) -> Vec<Triplet<usize, usize, f64>> {
        let mut out = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let Some(ri) = keep[i] else { continue };
            for (j, v) in self.row(i) {
                if let Some(cj) = keep[j] {
                    out.push(Triplet::new(ri, cj, v));
                }
            }
            if diag[i] != 0.0 {
                out.push(Triplet::new(ri, ri, diag[i]));
            }
        }
        out
    }
}

/// Sparse LU factorization (partial pivoting) of `A + diag(d)` restricted to a
/// subset of unknowns. Handles the indefinite Jacobians that arise when the
/// exponential term has a positive coefficient.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix, diag: &[f64], keep: &[Option<usize>], n_kept: usize) -> Result<Self> {
        let trips = a.restricted_triplets(diag, keep);
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n_kept, n_kept, &trips)
            .map_err(|e| Error::SingularJacobian(format!("assembly failed: {e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| Error::SingularJacobian(format!("{e:?}")))?;
        Ok(Self { lu, n: n_kept })
    }

    /// Factors the full matrix `A + diag(d)`.
    pub fn factor_full(a: &CsrMatrix, diag: &[f64]) -> Result<Self> {
        let keep: Vec<Option<usize>> = (0..a.n()).map(Some).collect();
        Self::factor(a, diag, &keep, a.n())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        let mut b = Col::<f64>::from_fn(self.n, |i| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| b[i]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian("non-finite solution of the linear system".into()));
        }
        Ok(x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_and_solve() {
        let a = CsrMatrix::from_triplets(
            3,
            vec![(0, 0, 2.0), (0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, -1.0)],
        );
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.nnz(), 5);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![5.0, 4.0, -1.0]);
        assert_eq!(a.quadratic_form(&[1.0, 1.0, 1.0]), 8.0);
        let lu = SparseLu::factor_full(&a, &[0.0, 0.0, 3.0]).unwrap();
        let x = lu.solve(&[5.0, 4.0, 2.0]).unwrap();
        for (xi, ei) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - ei).abs() < 1e-14);
        }
        // drop the middle unknown
        let keep = [Some(0), None, Some(1)];
        let lu = SparseLu::factor(&a, &[0.0; 3], &keep, 2).unwrap();
        let x = lu.solve(&[8.0, -3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let r = SparseLu::factor_full(&a, &[0.0, 0.0]).and_then(|lu| lu.solve(&[1.0, 2.0]));
        assert!(matches!(r, Err(Error::SingularJacobian(_))));
    }
}
