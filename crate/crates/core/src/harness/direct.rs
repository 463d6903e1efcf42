use faer::Mat;
use nalgebra::{DMatrix, DVector};

use crate::basis::{design_matrix, trend_vector};
use crate::error::{Error, Result};
use crate::geometry::{distance, SpatialDataset};
use crate::kernels::KernelModel;
use crate::linalg::DenseCholesky;

/// Universal kriging by dense Cholesky of `C`: `beta = (M^T C^-1 M)^-1 M^T C^-1 Z`,
/// `gamma = C^-1 (Z - M beta)`.
pub fn dense_kriging(data: &SpatialDataset, model: &KernelModel, f: u32, z: &[f64], targets: &[[f64; 3]]) -> Result<Vec<f64>> {
    let pts = data.locations();
    let n = pts.len();
    if z.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: z.len() });
    }
    let chol = DenseCholesky::from_faer(Mat::from_fn(n, n, |i, j| model.eval(distance(&pts[i], &pts[j]))))?;
    let m = design_matrix(data, f);
    let p = m.ncols();
    let mut cinv_m = DMatrix::zeros(n, p);
    for j in 0..p {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        cinv_m.column_mut(j).copy_from_slice(&chol.solve(&col));
    }
    let cinv_z = DVector::from_vec(chol.solve(z));
    let info = m.transpose() * &cinv_m;
    let beta = info
        .cholesky()
        .ok_or_else(|| Error::Numerical("M^T C^-1 M is not positive definite".into()))?
        .solve(&(m.transpose() * &cinv_z));
    let gamma = cinv_z - &cinv_m * &beta;
    let dim = data.dim();
    Ok(targets
        .iter()
        .map(|t| {
            let trend: f64 = trend_vector(dim, f, t).iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            trend + pts.iter().zip(gamma.iter()).map(|(s, g)| model.eval(distance(s, t)) * g).sum::<f64>()
        })
        .collect())
}
