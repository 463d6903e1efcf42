#![allow(dead_code)]

use mlkrig::basis::{build_basis, DesignSpec, MultiLevelBasis};
use mlkrig::geometry::{build_tree, DecompositionTree, SpatialDataset};
use mlkrig::kernels::KernelModel;
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform(n: usize, dim: usize, seed: u64) -> SpatialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let mut p = [0.0; 3];
            for v in p.iter_mut().take(dim) {
                *v = rng.random::<f64>();
            }
            p
        })
        .collect();
    SpatialDataset::new(dim, pts, None).unwrap()
}

pub fn setup(n: usize, dim: usize, f: u32, f_tilde: u32, seed: u64) -> (SpatialDataset, DecompositionTree, MultiLevelBasis) {
    let data = uniform(n, dim, seed);
    let spec = DesignSpec::new(dim, f, f_tilde).unwrap();
    let tree = build_tree(&data, spec.p()).unwrap();
    let basis = build_basis(&tree, &data, spec).unwrap();
    (data, tree, basis)
}

/// Dense kernel matrix in dataset order.
pub fn dense_kernel(model: &KernelModel, data: &SpatialDataset) -> DMatrix<f64> {
    let pts = data.locations();
    let n = pts.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d: f64 = (0..3).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum::<f64>().sqrt();
        model.eval(d)
    })
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

pub fn normal_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}
