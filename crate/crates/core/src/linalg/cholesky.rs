//! Sparse Cholesky: ordering, elimination tree, up-looking numeric
//! factorization, with the trailing dense block handed to a dense kernel.

use faer::{Accum, Mat};

use super::dense::{gemm, llt_lower};
use super::ordering::{compute_ordering, OrderingMethod};
use super::SparseSpd;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
/// Trailing blocks at least this large and this dense are factored densely.
const DENSE_MIN: usize = 48;
const DENSE_FILL: f64 = 0.7;

/// `P A P^T = G G^T` with `G` split into sparse leading columns and a
/// dense trailing block.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Start of the dense block.
    k0: usize,
    /// Columns `0..k0` of `G` (all rows), diagonal first in each column.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    /// Lower factor of the trailing block, `(n-k0) x (n-k0)`.
    dense: Mat<f64>,
    nnz: usize,
}

fn etree(a: &SparseSpd) -> Vec<usize> {
    let n = a.n();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for (mut i, _) in a.column(k) {
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row `k` of `G` restricted to columns `< limit`, written to
/// `stack[top..]` in topological order. Returns `top`.
fn ereach(
    a: &SparseSpd,
    k: usize,
    limit: usize,
    parent: &[usize],
    flag: &mut [usize],
    stack: &mut [usize],
    path: &mut Vec<usize>,
) -> usize {
    let mut top = stack.len();
    flag[k] = k;
    for (mut i, _) in a.column(k) {
        if i >= k.min(limit) {
            continue;
        }
        path.clear();
        while i != NONE && i < limit && flag[i] != k {
            path.push(i);
            flag[i] = k;
            i = parent[i];
        }
        while let Some(v) = path.pop() {
            top -= 1;
            stack[top] = v;
        }
    }
    top
}

impl CholFactor {
    pub fn analyze_and_factor(a: &SparseSpd) -> Result<Self> {
        Self::factor_with(a, &OrderingMethod::MinimumDegree)
    }

    pub fn factor_with(a: &SparseSpd, method: &OrderingMethod) -> Result<Self> {
        let perm = compute_ordering(a, method);
        if perm.len() != a.n() {
            return Err(Error::LengthMismatch { expected: a.n(), actual: perm.len() });
        }
        let c = a.permute(&perm);
        Self::factor_permuted(&c, perm)
    }

    fn factor_permuted(c: &SparseSpd, perm: Vec<usize>) -> Result<Self> {
        let n = c.n();
        let parent = etree(c);
        let mut flag = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut path = Vec::new();

        // Column counts from the row patterns.
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(c, k, n, &parent, &mut flag, &mut stack, &mut path);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let nnz: usize = counts.iter().sum();

        // Smallest k0 whose trailing block of the factor is dense enough.
        let mut k0 = n;
        let mut trailing = 0usize;
        for j in (0..n).rev() {
            trailing += counts[j];
            let m = n - j;
            if m >= DENSE_MIN && trailing as f64 >= DENSE_FILL * (m * (m + 1) / 2) as f64 {
                k0 = j;
            }
        }

        let mut col_ptr = vec![0usize; k0 + 1];
        for j in 0..k0 {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let total = col_ptr[k0];
        let mut row_idx = vec![0usize; total];
        let mut values = vec![0.0; total];
        let mut next = col_ptr.clone();
        let mut x = vec![0.0; n];

        for k in 0..n {
            let top = ereach(c, k, k0, &parent, &mut flag, &mut stack, &mut path);
            let sparse_row = k < k0;
            for (i, v) in c.column(k) {
                if i < k0 {
                    x[i] = v;
                }
            }
            let mut d = if sparse_row { x[k] } else { 0.0 };
            if sparse_row {
                x[k] = 0.0;
            }
            for &i in &stack[top..] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..next[i] {
                    let r = row_idx[p];
                    if r < k0 {
                        x[r] -= values[p] * lki;
                    }
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if sparse_row {
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: k });
                }
                let p = next[k];
                next[k] += 1;
                row_idx[p] = k;
                values[p] = d.sqrt();
            }
        }

        // Schur complement of the trailing block.
        let m = n - k0;
        let mut dense = Mat::<f64>::zeros(m, m);
        if m > 0 {
            for j in k0..n {
                for (i, v) in c.column(j) {
                    if i >= k0 {
                        dense[(i - k0, j - k0)] = v;
                        dense[(j - k0, i - k0)] = v;
                    }
                }
            }
            if k0 > 0 {
                let mut l21 = Mat::<f64>::zeros(m, k0);
                for j in 0..k0 {
                    for p in col_ptr[j]..next[j] {
                        if row_idx[p] >= k0 {
                            l21[(row_idx[p] - k0, j)] = values[p];
                        }
                    }
                }
                gemm(dense.as_mut(), Accum::Add, l21.as_ref(), l21.transpose(), -1.0);
            }
            dense = llt_lower(dense).map_err(|index| Error::NotPositiveDefinite { pivot: k0 + index })?;
        }
        Ok(Self {
            n,
            perm,
            k0,
            col_ptr,
            row_idx,
            values,
            dense,
            nnz,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Structural nonzeros of `G` (lower triangle, diagonal included).
    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// Order of the trailing block factored densely.
    pub fn dense_block_size(&self) -> usize {
        self.n - self.k0
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.k0).map(|j| self.values[self.col_ptr[j]]).collect();
        d.extend((0..self.n - self.k0).map(|i| self.dense[(i, i)]));
        d
    }

    /// `log det A = 2 sum log G_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Dense `G` in the permuted ordering.
    pub fn to_dense_lower(&self) -> nalgebra::DMatrix<f64> {
        let mut g = nalgebra::DMatrix::zeros(self.n, self.n);
        for j in 0..self.k0 {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                g[(self.row_idx[p], j)] = self.values[p];
            }
        }
        for j in 0..self.n - self.k0 {
            for i in j..self.n - self.k0 {
                g[(self.k0 + i, self.k0 + j)] = self.dense[(i, j)];
            }
        }
        g
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, actual: b.len() });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        let k0 = self.k0;
        // Forward: G y = P b.
        for j in 0..k0 {
            let s = self.col_ptr[j];
            let yj = y[j] / self.values[s];
            y[j] = yj;
            if yj != 0.0 {
                for p in s + 1..self.col_ptr[j + 1] {
                    y[self.row_idx[p]] -= self.values[p] * yj;
                }
            }
        }
        let m = self.n - k0;
        let l = &self.dense;
        for j in 0..m {
            let yj = y[k0 + j] / l[(j, j)];
            y[k0 + j] = yj;
            let col = l.col(j);
            for i in j + 1..m {
                y[k0 + i] -= col[i] * yj;
            }
        }
        // Backward: G^T x = y.
        for j in (0..m).rev() {
            let col = l.col(j);
            let mut acc = y[k0 + j];
            for i in j + 1..m {
                acc -= col[i] * y[k0 + i];
            }
            y[k0 + j] = acc / col[j];
        }
        for j in (0..k0).rev() {
            let s = self.col_ptr[j];
            let mut acc = y[j];
            for p in s + 1..self.col_ptr[j + 1] {
                acc -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = acc / self.values[s];
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }
}

pub fn analyze_and_factor(a: &SparseSpd) -> Result<CholFactor> {
    CholFactor::analyze_and_factor(a)
}

pub fn log_det(factor: &CholFactor) -> f64 {
    factor.log_det()
}

pub fn solve_chol(factor: &CholFactor, b: &[f64]) -> Result<Vec<f64>> {
    factor.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn hand_factorization() {
        let a = SparseSpd::from_dense(&DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0])).unwrap();
        let f = CholFactor::factor_with(&a, &OrderingMethod::Natural).unwrap();
        let g = f.to_dense_lower();
        assert_eq!(g[(0, 0)], 2.0);
        assert_eq!(g[(1, 0)], 1.0);
        assert!((g[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn identity_factor() {
        let f = analyze_and_factor(&SparseSpd::identity(100)).unwrap();
        assert_eq!(f.nnz(), 100);
        assert_eq!(log_det(&f), 0.0);
        let b: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(solve_chol(&f, &b).unwrap(), b);
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = SparseSpd::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(matches!(analyze_and_factor(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn diagonal_log_det() {
        let f = analyze_and_factor(&SparseSpd::diagonal(&[4.0, 9.0])).unwrap();
        assert!((f.log_det() - 36f64.ln()).abs() < 1e-15);
    }
}
