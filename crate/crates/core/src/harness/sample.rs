use faer::Mat;
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::data::SAMPLE_STREAM;
use crate::basis::design_matrix;
use crate::error::{Error, Result};
use crate::geometry::{distance, SpatialDataset};
use crate::kernels::KernelModel;
use crate::linalg::DenseCholesky;

pub const SAMPLE_JITTER: f64 = 1e-12;

/// Draws `Z = M beta + G xi` from a dense Cholesky factor `G G^T = C`.
pub struct GpSampler {
    design: DMatrix<f64>,
    factor: Option<DenseCholesky>,
    jittered: bool,
}

impl GpSampler {
    pub fn new(data: &SpatialDataset, model: &KernelModel, f: u32) -> Result<Self> {
        let pts = data.locations();
        let n = pts.len();
        let c = Mat::from_fn(n, n, |i, j| model.eval(distance(&pts[i], &pts[j])));
        let (factor, jittered) = match DenseCholesky::from_faer(c.clone()) {
            Ok(l) => (l, false),
            Err(_) => {
                let jitter = Mat::from_fn(n, n, |i, j| c[(i, j)] + if i == j { SAMPLE_JITTER } else { 0.0 });
                let l = DenseCholesky::from_faer(jitter)
                    .map_err(|e| Error::Numerical(format!("covariance not factorable even with jitter: {e}")))?;
                (l, true)
            }
        };
        Ok(Self { design: design_matrix(data, f), factor: Some(factor), jittered })
    }

    /// Identity covariance; `Z - M beta` is the raw normal draw.
    pub fn identity(data: &SpatialDataset, f: u32) -> Self {
        Self { design: design_matrix(data, f), factor: None, jittered: false }
    }

    /// True when the factorization needed the diagonal jitter.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn normals(&self, seed: u64, replicate: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLE_STREAM + replicate);
        (0..self.n()).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn draw(&self, beta: &[f64], seed: u64, replicate: u64) -> Result<Vec<f64>> {
        self.draw_from(beta, &self.normals(seed, replicate))
    }

    pub fn draw_from(&self, beta: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.design.ncols() {
            return Err(Error::LengthMismatch { expected: self.design.ncols(), actual: beta.len() });
        }
        if xi.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), actual: xi.len() });
        }
        let mut z = match &self.factor {
            Some(l) => l.mul_lower(xi),
            None => xi.to_vec(),
        };
        let trend = &self.design * nalgebra::DVector::from_column_slice(beta);
        for (zi, ti) in z.iter_mut().zip(trend.iter()) {
            *zi += ti;
        }
        Ok(z)
    }
}

pub fn sample_gp(data: &SpatialDataset, model: &KernelModel, f: u32, beta: &[f64], seed: u64) -> Result<Vec<f64>> {
    GpSampler::new(data, model, f)?.draw(beta, seed, 0)
}
