//! Untapered products with `C` and `C_W` by direct summation.

use faer::{Accum, ColMut, ColRef, Mat};

use super::{check_positive, project_kernel, view};
use crate::basis::MultiLevelBasis;
use crate::error::{Error, Result};
use crate::kernels::Covariance;
use crate::linalg::dense::gemm;

/// Dense kernel matrix in tree order with the basis needed to map contrast
/// vectors in and out.
#[derive(Debug, Clone)]
pub struct ExactOperator<'a> {
    basis: &'a MultiLevelBasis,
    cov: Covariance,
    c: Mat<f64>,
}

impl<'a> ExactOperator<'a> {
    pub fn new(basis: &'a MultiLevelBasis, cov: &Covariance) -> Self {
        let pts = basis.points();
        let n = pts.len();
        let mut c = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            c[(j, j)] = cov.eval(0.0);
            for i in j + 1..n {
                let v = cov.between(&pts[i], &pts[j]);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        Self { basis, cov: cov.clone(), c }
    }

    pub fn basis(&self) -> &MultiLevelBasis {
        self.basis
    }

    /// `C` in tree order.
    pub fn kernel_matrix(&self) -> &Mat<f64> {
        &self.c
    }

    /// `C x` with `x` in tree order.
    pub fn apply_c_tree(&self, x: &[f64], y: &mut [f64]) {
        let n = self.c.nrows();
        gemm(
            ColMut::from_slice_mut(&mut y[..n]).as_mat_mut(),
            Accum::Replace,
            self.c.as_ref(),
            ColRef::from_slice(&x[..n]).as_mat(),
            1.0,
        );
    }

    /// `C x` with `x` in dataset order.
    pub fn apply_c(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.basis.n() {
            return Err(Error::LengthMismatch { expected: self.basis.n(), actual: x.len() });
        }
        let xt = self.basis.to_tree_order(x);
        let mut y = vec![0.0; xt.len()];
        self.apply_c_tree(&xt, &mut y);
        Ok(self.basis.from_tree_order(&y))
    }

    /// `W C W^T v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.basis.num_contrasts();
        if v.len() != m {
            return Err(Error::LengthMismatch { expected: m, actual: v.len() });
        }
        let mut out = vec![0.0; m];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let x = self.basis.apply_wt_tree(v);
        let mut y = vec![0.0; x.len()];
        self.apply_c_tree(&x, &mut y);
        out.copy_from_slice(&self.basis.apply_w_tree(&y)[..out.len()]);
    }

    /// Exact diagonal of `C_W`, computed per group from `Psi^T C Psi`.
    pub fn diag_preconditioner(&self) -> Result<Vec<f64>> {
        let mut d = vec![0.0; self.basis.num_contrasts()];
        for g in self.basis.groups() {
            let h = project_kernel(self.basis.points(), &self.cov, g, g.range.clone());
            let psi = view(g);
            for c in 0..g.count() {
                d[g.first_row + c] = (0..g.range.len()).map(|k| h[(c, k)] * psi[(k, c)]).sum();
            }
        }
        check_positive(d)
    }
}

/// `W C W^T v` by direct `O(n^2)` summation.
pub fn matvec_exact(basis: &MultiLevelBasis, cov: &Covariance, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != basis.num_contrasts() {
        return Err(Error::LengthMismatch { expected: basis.num_contrasts(), actual: v.len() });
    }
    let pts = basis.points();
    let x = basis.apply_wt_tree(v);
    let y: Vec<f64> = pts
        .iter()
        .map(|p| pts.iter().zip(&x).map(|(q, &xj)| cov.between(p, q) * xj).sum())
        .collect();
    Ok(basis.apply_w_tree(&y))
}
