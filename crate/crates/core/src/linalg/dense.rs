//! Dense Cholesky for oracles and Gaussian sampling.

use faer::linalg::cholesky::llt::factor::LltError;
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Wide SIMD kernels can leave the upper vector halves dirty, which makes
/// later non-VEX scalar code (kernel evaluation loops) much slower.
#[inline]
fn settle_simd() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the instruction exists on every CPU reporting AVX.
        unsafe { std::arch::x86_64::_mm256_zeroupper() }
    }
}

/// `dst (+)= alpha * lhs * rhs`, single threaded.
pub fn gemm(dst: MatMut<'_, f64>, accum: Accum, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>, alpha: f64) {
    matmul(dst, accum, lhs, rhs, alpha, Par::Seq);
    settle_simd();
}

/// Lower factor of a dense SPD matrix; the error is the failing pivot.
pub fn llt_lower(a: Mat<f64>) -> std::result::Result<Mat<f64>, usize> {
    let out = match a.llt(Side::Lower) {
        Ok(llt) => Ok(llt.L().to_owned()),
        Err(LltError::NonPositivePivot { index }) => Err(index),
    };
    settle_simd();
    out
}

/// Lower Cholesky factor of a dense SPD matrix.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    l: Mat<f64>,
}

impl DenseCholesky {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        Self::from_faer(to_faer(a))
    }

    pub fn from_faer(a: Mat<f64>) -> Result<Self> {
        let l = llt_lower(a).map_err(|pivot| Error::NotPositiveDefinite { pivot })?;
        Ok(Self { l })
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &Mat<f64> {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// `L v`.
    pub fn mul_lower(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let vj = v[j];
            if vj != 0.0 {
                let col = self.l.col(j);
                for i in j..n {
                    out[i] += col[i] * vj;
                }
            }
        }
        out
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = b.to_vec();
        for j in 0..n {
            let yj = y[j] / self.l[(j, j)];
            y[j] = yj;
            let col = self.l.col(j);
            for i in j + 1..n {
                y[i] -= col[i] * yj;
            }
        }
        for j in (0..n).rev() {
            let col = self.l.col(j);
            let mut acc = y[j];
            for i in j + 1..n {
                acc -= col[i] * y[i];
            }
            y[j] = acc / self.l[(j, j)];
        }
        y
    }
}
