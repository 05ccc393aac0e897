use alloc::vec::Vec;

use super::matrix::{CMatrix, C64, ZERO};
use crate::error::{Error, Result};

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Fails with [`Error::DegenerateSteadyState`] when a pivot falls below
    /// `rel_tol * max|A|`.
    pub fn factor(a: &CMatrix, rel_tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.rows(), found: a.cols() });
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let threshold = rel_tol * a.max_abs();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].norm();
            for r in k + 1..n {
                let v = lu[(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > threshold) {
                return Err(Error::DegenerateSteadyState);
            }
            if p != k {
                let data = lu.as_mut_slice();
                for c in 0..n {
                    data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let inv = lu[(k, k)].inv();
            let data = lu.as_mut_slice();
            let (top, bottom) = data.split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n..(k + 1) * n];
            for row in bottom.chunks_exact_mut(n) {
                let f = row[k] * inv;
                row[k] = f;
                if f == ZERO {
                    continue;
                }
                for c in k + 1..n {
                    row[c] -= f * pivot_row[c];
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let row = self.lu.row(r);
            let mut s = x[r];
            for c in 0..r {
                s -= row[c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let row = self.lu.row(r);
            let mut s = x[r];
            for c in r + 1..n {
                s -= row[c] * x[c];
            }
            x[r] = s / row[r];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        let n = self.lu.rows();
        assert_eq!(b.rows(), n);
        let mut out = CMatrix::zeros(n, b.cols());
        let mut col = Vec::with_capacity(n);
        for c in 0..b.cols() {
            col.clear();
            col.extend((0..n).map(|r| b[(r, c)]));
            let x = self.solve(&col);
            for r in 0..n {
                out[(r, c)] = x[r];
            }
        }
        out
    }
}
