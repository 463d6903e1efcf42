mod common;

use common::{dense_kernel, normal_vec, random_vec, setup};
use mlkrig::basis::{design_matrix, trend_vector};
use mlkrig::geometry::SpatialDataset;
use mlkrig::kernels::{Covariance, KernelModel};
use mlkrig::krige::{solve_kriging_system, KrigingOptions, KrigingSystem, Preconditioner};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

struct Dense {
    c: DMatrix<f64>,
    m: DMatrix<f64>,
    c_inv: DMatrix<f64>,
    info_inv: DMatrix<f64>,
}

impl Dense {
    fn new(model: &KernelModel, data: &SpatialDataset, f: u32) -> Self {
        let c = dense_kernel(model, data);
        let m = design_matrix(data, f);
        let c_inv = c.clone().cholesky().unwrap().inverse();
        let info_inv = (m.transpose() * &c_inv * &m).try_inverse().unwrap();
        Self { c, m, c_inv, info_inv }
    }

    /// Bordered system `[C M; M^T 0] [gamma; beta] = [Z; 0]`.
    fn saddle(&self, z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let (n, p) = self.m.shape();
        let mut a = DMatrix::zeros(n + p, n + p);
        a.view_mut((0, 0), (n, n)).copy_from(&self.c);
        a.view_mut((0, n), (n, p)).copy_from(&self.m);
        a.view_mut((n, 0), (p, n)).copy_from(&self.m.transpose());
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from_slice(z);
        let x = a.lu().solve(&rhs).unwrap();
        (x.rows(0, n).into_owned(), x.rows(n, p).into_owned())
    }

    fn gls_beta(&self, z: &[f64]) -> DVector<f64> {
        &self.info_inv * self.m.transpose() * &self.c_inv * DVector::from_column_slice(z)
    }

    fn mse(&self, phi0: f64, c: &DVector<f64>, m0: &DVector<f64>) -> f64 {
        let u = self.m.transpose() * &self.c_inv * c - m0;
        phi0 - c.dot(&(&self.c_inv * c)) + u.dot(&(&self.info_inv * &u))
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn opts(eps: f64) -> KrigingOptions {
    KrigingOptions { eps, ..Default::default() }
}

#[test]
fn solution_matches_bordered_system() {
    let (data, _, basis) = setup(300, 2, 1, 2, 11);
    let model = KernelModel::matern(1.5, 0.2).unwrap();
    let dense = Dense::new(&model, &data, 1);
    let z = normal_vec(300, 3);
    let sol = solve_kriging_system(&basis, &data, &Covariance::exact(model), &z, 1e-10).unwrap();
    assert!(sol.report.converged);
    assert!(sol.report.relative_residual <= 1e-10);
    let (gamma, beta) = dense.saddle(&z);
    assert!(rel(&sol.gamma, gamma.as_slice()) < 1e-6, "gamma {}", rel(&sol.gamma, gamma.as_slice()));
    assert!(rel(&sol.beta, beta.as_slice()) < 1e-6);
    assert_eq!(sol.theta, vec![1.5, 0.2]);
}

#[test]
fn beta_is_the_gls_estimate() {
    let (data, _, basis) = setup(250, 3, 1, 2, 5);
    let model = KernelModel::exponential(0.3).unwrap();
    let dense = Dense::new(&model, &data, 1);
    let z: Vec<f64> = random_vec(250, 9).iter().enumerate().map(|(i, v)| v + data.point(i)[0] * 2.0 - 1.0).collect();
    let sol = solve_kriging_system(&basis, &data, &Covariance::exact(model), &z, 1e-11).unwrap();
    let beta = dense.gls_beta(&z);
    assert!(rel(&sol.beta, beta.as_slice()) < 1e-6);
}

#[test]
fn predictions_and_mse_match_dense_formulas() {
    let (data, _, basis) = setup(300, 2, 2, 3, 21);
    let model = KernelModel::matern(1.0, 0.15).unwrap();
    let dense = Dense::new(&model, &data, 2);
    let cov = Covariance::exact(model.clone());
    let sys = KrigingSystem::new(&basis, &data, &cov, opts(1e-10)).unwrap();
    let z = normal_vec(300, 4);
    let sol = sys.solve(&z).unwrap();
    let (gamma, beta) = dense.saddle(&z);
    let ws = sys.mse_workspace().unwrap();
    let info = sys.gls_information(&ws);
    let want_info = dense.m.transpose() * &dense.c_inv * &dense.m;
    assert!((&info - &want_info).norm() / want_info.norm() < 1e-6);

    for (k, t) in [[0.5, 0.5], [0.03, 0.91], [0.77, 0.12], [0.999, 0.0]].iter().enumerate() {
        let c = DVector::from_column_slice(&sys.cross_covariance(t).unwrap());
        let m0 = DVector::from_vec(trend_vector(2, 2, &[t[0], t[1], 0.0]));
        let want = m0.dot(&beta) + c.dot(&gamma);
        let got = sys.predict(&sol, t).unwrap();
        assert!((got - want).abs() < 1e-6 * (1.0 + want.abs()), "target {k}: {got} vs {want}");

        let want_mse = dense.mse(model.variance_at_zero(), &c, &m0);
        let got_mse = sys.mse(&ws, t).unwrap();
        assert!(got_mse.value >= 0.0);
        assert!((got_mse.raw - want_mse).abs() < 1e-6, "target {k}: {} vs {want_mse}", got_mse.raw);
    }
}

#[test]
fn interpolates_at_observed_sites() {
    let (data, _, basis) = setup(200, 2, 1, 2, 8);
    let cov = Covariance::exact(KernelModel::matern(1.5, 0.25).unwrap());
    let sys = KrigingSystem::new(&basis, &data, &cov, opts(1e-11)).unwrap();
    let z = normal_vec(200, 1);
    let sol = sys.solve(&z).unwrap();
    let ws = sys.mse_workspace().unwrap();
    for i in [0, 57, 199] {
        let s = data.point(i);
        let pred = sys.predict(&sol, &s[..2]).unwrap();
        assert!((pred - z[i]).abs() < 1e-4, "site {i}: {pred} vs {}", z[i]);
        let mse = sys.mse(&ws, &s[..2]).unwrap();
        assert!(mse.value < 1e-6, "site {i}: {}", mse.value);
    }
}

#[test]
fn pure_trend_is_reproduced() {
    let (data, _, basis) = setup(200, 2, 2, 3, 2);
    let cov = Covariance::exact(KernelModel::exponential(0.2).unwrap());
    let beta0 = [1.5, -2.0, 0.5, 3.0, -1.0, 0.25];
    let m = design_matrix(&data, 2);
    let z = (&m * DVector::from_column_slice(&beta0)).as_slice().to_vec();
    let sys = KrigingSystem::new(&basis, &data, &cov, opts(1e-10)).unwrap();
    let sol = sys.solve(&z).unwrap();
    assert!(sol.gamma.iter().all(|g| g.abs() < 1e-8));
    assert_eq!(sol.report.iterations, 0);
    assert!(rel(&sol.beta, &beta0) < 1e-10);
    let t = [0.31, 0.64];
    let want: f64 = trend_vector(2, 2, &[t[0], t[1], 0.0]).iter().zip(&beta0).map(|(a, b)| a * b).sum();
    assert!((sys.predict(&sol, &t).unwrap() - want).abs() < 1e-9);
}

#[test]
fn zero_cross_covariance_reduces_to_trend_variance() {
    let (data, _, basis) = setup(200, 2, 1, 2, 13);
    let model = KernelModel::matern(0.5, 0.1).unwrap();
    let dense = Dense::new(&model, &data, 1);
    let sys = KrigingSystem::new(&basis, &data, &Covariance::exact(model.clone()), opts(1e-10)).unwrap();
    let ws = sys.mse_workspace().unwrap();
    let m0 = trend_vector(2, 1, &[5.0, -3.0, 0.0]);
    let got = sys.mse_with(&ws, &vec![0.0; 200], &m0).unwrap();
    let m0v = DVector::from_vec(m0);
    let want = model.variance_at_zero() + m0v.dot(&(&dense.info_inv * &m0v));
    assert_eq!(got.explained, 0.0);
    assert_eq!(got.iterations, 0);
    assert!((got.value - want).abs() < 1e-8 * want);
}

#[test]
fn no_contrasts_when_n_equals_p() {
    let (data, _, basis) = setup(3, 2, 1, 2, 4);
    assert_eq!(basis.num_contrasts(), 0);
    let model = KernelModel::exponential(0.5).unwrap();
    let sys = KrigingSystem::new(&basis, &data, &Covariance::exact(model.clone()), opts(1e-10)).unwrap();
    let z = vec![1.0, -2.0, 0.5];
    let sol = sys.solve(&z).unwrap();
    assert!(sol.gamma.is_empty() || sol.gamma.iter().all(|&g| g == 0.0));
    let dense = Dense::new(&model, &data, 1);
    let (_, beta) = dense.saddle(&z);
    assert!(rel(&sol.beta, beta.as_slice()) < 1e-10);
    let ws = sys.mse_workspace().unwrap();
    let t = [0.4, 0.4];
    let c = DVector::from_column_slice(&sys.cross_covariance(&t).unwrap());
    let m0 = DVector::from_vec(trend_vector(2, 1, &[0.4, 0.4, 0.0]));
    let want = dense.mse(model.variance_at_zero(), &c, &m0);
    assert!((sys.mse(&ws, &t).unwrap().raw - want).abs() < 1e-8);
}

#[test]
fn preconditioners_agree() {
    let (data, _, basis) = setup(250, 2, 1, 2, 31);
    let cov = Covariance::exact(KernelModel::matern(1.25, 0.2).unwrap());
    let z = normal_vec(250, 6);
    let mut sols = Vec::new();
    for pre in [Preconditioner::Jacobi, Preconditioner::Diagonal, Preconditioner::None] {
        let o = KrigingOptions { eps: 1e-10, preconditioner: pre, ..Default::default() };
        sols.push(KrigingSystem::new(&basis, &data, &cov, o).unwrap().solve(&z).unwrap());
    }
    assert!(rel(&sols[1].gamma, &sols[0].gamma) < 1e-6);
    assert!(rel(&sols[2].gamma, &sols[0].gamma) < 1e-6);
    assert_eq!("diagonal".parse::<Preconditioner>().unwrap(), Preconditioner::Diagonal);
    assert!("ilu".parse::<Preconditioner>().is_err());
}

#[test]
fn rejects_bad_targets() {
    let (data, _, basis) = setup(50, 2, 1, 2, 1);
    let cov = Covariance::exact(KernelModel::exponential(0.2).unwrap());
    let sys = KrigingSystem::new(&basis, &data, &cov, opts(1e-8)).unwrap();
    let sol = sys.solve(&normal_vec(50, 2)).unwrap();
    assert!(sys.predict(&sol, &[0.5]).is_err());
    assert!(sys.predict(&sol, &[0.5, f64::NAN]).is_err());
    assert!(KrigingSystem::new(&basis, &data, &cov, opts(0.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn predictor_is_unbiased_under_trend_shifts(seed in 0u64..1000, b0 in -5.0f64..5.0, b1 in -5.0f64..5.0, b2 in -5.0f64..5.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let (data, _, basis) = setup(120, 2, 1, 2, seed);
        let cov = Covariance::exact(KernelModel::matern(1.5, 0.2).unwrap());
        let sys = KrigingSystem::new(&basis, &data, &cov, opts(1e-9)).unwrap();
        let z = normal_vec(120, seed + 1);
        let shift: Vec<f64> = (0..120).map(|i| b0 + b1 * data.point(i)[0] + b2 * data.point(i)[1]).collect();
        let zs: Vec<f64> = z.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let p = sys.predict(&sys.solve(&z).unwrap(), &[x, y]).unwrap();
        let ps = sys.predict(&sys.solve(&zs).unwrap(), &[x, y]).unwrap();
        prop_assert!((ps - p - (b0 + b1 * x + b2 * y)).abs() < 1e-6);
        let ws = sys.mse_workspace().unwrap();
        prop_assert!(sys.mse(&ws, &[x, y]).unwrap().value >= 0.0);
    }
}
