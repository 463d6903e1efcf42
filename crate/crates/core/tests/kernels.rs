mod common;

use mlkrig::kernels::{cross_covariance, kernel_eval, Covariance, KernelFamily, KernelModel, KernelSpec, SplineInterpolant};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid rule,
/// which converges geometrically for this integrand.
fn bessel_k_quadrature(nu: f64, x: f64) -> f64 {
    let h: f64 = 1e-3;
    let mut sum = 0.5 * (-x).exp();
    let mut t: f64 = h;
    loop {
        let term = (-x * t.cosh()).exp() * (nu * t).cosh();
        sum += term;
        if term < 1e-300 || t > 40.0 {
            break;
        }
        t += h;
    }
    sum * h
}

fn matern_oracle(nu: f64, rho: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let z = (2.0 * nu).sqrt() * r / rho;
    2f64.powf(1.0 - nu) / gamma(nu) * z.powf(nu) * bessel_k_quadrature(nu, z)
}

#[test]
fn matern_matches_quadrature() {
    for &(nu, rho) in &[(0.75, 1.0 / 6.0), (1.0, 1.0 / 6.0), (0.3, 0.5), (2.2, 0.1), (4.0, 1.0)] {
        let m = KernelModel::matern(nu, rho).unwrap();
        for k in 0..40 {
            let r = 0.0125 * k as f64 * rho * 8.0;
            let (got, want) = (m.eval(r), matern_oracle(nu, rho, r));
            assert!((got - want).abs() <= 1e-10 * want.max(1e-12), "nu {nu} rho {rho} r {r}: {got} vs {want}");
        }
    }
}

#[test]
fn closed_forms() {
    for r in [0.0, 0.01, 0.2, 1.0, 3.0] {
        let rho = 0.3;
        let z = r / rho;
        let exp = KernelModel::exponential(rho).unwrap();
        assert!((exp.eval(r) - (-z).exp()).abs() < 1e-15);
        let half = KernelModel::matern(0.5, rho).unwrap();
        assert!((half.eval(r) - (-z).exp()).abs() < 1e-15);
        let z3 = 3f64.sqrt() * z;
        let m32 = KernelModel::matern(1.5, rho).unwrap();
        assert!((m32.eval(r) - (1.0 + z3) * (-z3).exp()).abs() < 1e-15);
        let z5 = 5f64.sqrt() * z;
        let m52 = KernelModel::matern(2.5, rho).unwrap();
        assert!((m52.eval(r) - (1.0 + z5 + z5 * z5 / 3.0) * (-z5).exp()).abs() < 1e-15);
        let g = KernelModel::gaussian(rho).unwrap();
        assert!((g.eval(r) - (-0.5 * z * z).exp()).abs() < 1e-15);
    }
}

#[test]
fn matern_continuous_across_special_orders() {
    for nu in [0.5, 1.5, 2.5] {
        let a = KernelModel::matern(nu, 0.2).unwrap();
        let b = KernelModel::matern(nu * (1.0 + 1e-9), 0.2).unwrap();
        for r in [0.01, 0.1, 0.5] {
            assert!((a.eval(r) - b.eval(r)).abs() < 1e-8);
        }
    }
}

#[test]
fn derivative_matches_finite_difference() {
    for m in [
        KernelModel::matern(0.75, 1.0 / 6.0).unwrap(),
        KernelModel::matern(1.7, 0.3).unwrap(),
        KernelModel::matern(1.5, 0.3).unwrap(),
        KernelModel::exponential(0.4).unwrap(),
        KernelModel::gaussian(0.4).unwrap(),
    ] {
        for r in [0.02, 0.1, 0.5, 1.2] {
            let h = 1e-6 * r;
            let fd = (m.eval(r + h) - m.eval(r - h)) / (2.0 * h);
            assert!((m.derivative(r) - fd).abs() <= 1e-6 * fd.abs().max(1e-6), "{m:?} at {r}");
        }
    }
}

#[test]
fn dense_covariance_is_positive_definite() {
    let data = common::uniform(150, 2, 3);
    for m in [KernelModel::matern(0.75, 1.0 / 6.0).unwrap(), KernelModel::exponential(1.0).unwrap()] {
        let c = common::dense_kernel(&m, &data);
        let eig = c.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }
}

#[test]
fn spline_meets_tolerance() {
    let m = KernelModel::matern(0.75, 1.0 / 6.0).unwrap();
    let tol = 5e-9;
    let s = SplineInterpolant::build(&m, tol, 2.5).unwrap();
    assert_eq!(s.eval(0.0), 1.0);
    let mut worst = 0.0f64;
    for k in 0..=20000 {
        let r = 2.5 * k as f64 / 20000.0;
        worst = worst.max((s.eval(r) - m.eval(r)).abs());
    }
    assert!(worst <= tol, "max error {worst:e}");
    let nodes = s.nodes();
    assert!(nodes.windows(2).all(|w| w[0] < w[1]));

    let cov = Covariance::with_spline(m, tol, 2.5).unwrap();
    let (a, b) = ([0.1, 0.2, 0.0], [0.4, 0.9, 0.0]);
    assert!((cov.between(&a, &b) - Covariance::exact(m).between(&a, &b)).abs() <= tol);
}

#[test]
fn spline_node_cap_is_reported() {
    let r = SplineInterpolant::from_fn(|r| (50.0 * r).sin(), |r| 50.0 * (50.0 * r).cos(), 0.0, 1e-14, 10.0, 16);
    assert!(r.is_err());
}

#[test]
fn specs_parse_and_validate() {
    let s: KernelSpec = "matern:0.75,0.2".parse().unwrap();
    assert_eq!(s.family, KernelFamily::Matern);
    assert_eq!(s.to_string().parse::<KernelSpec>().unwrap(), s);
    assert!("matern:0.75".parse::<KernelSpec>().is_err());
    assert!("exponential:-1".parse::<KernelSpec>().is_err());
    assert!("cauchy:1".parse::<KernelSpec>().is_err());
    assert!(KernelModel::matern(0.0, 1.0).is_err());
    assert!(KernelModel::gaussian(f64::NAN).is_err());
    let m = KernelModel::matern(1.0, 0.2).unwrap();
    assert!(kernel_eval(&m, -1.0).is_err());
    assert_eq!(m.with_theta(&[2.0, 0.5]).unwrap().theta(), vec![2.0, 0.5]);
    assert!(m.with_theta(&[2.0]).is_err());
}

#[test]
fn cross_covariance_checks_target() {
    let data = common::uniform(20, 3, 4);
    let m = KernelModel::exponential(0.5).unwrap();
    assert!(cross_covariance(&m, &data, &[0.5, 0.5]).is_err());
    assert!(cross_covariance(&m, &data, &[0.5, f64::NAN, 0.5]).is_err());
    let c = cross_covariance(&m, &data, &data.point(3)[..]).unwrap();
    assert_eq!(c[3], 1.0);
}

proptest! {
    #[test]
    fn matern_is_bounded_and_decreasing(nu in 0.2f64..4.0, rho in 0.05f64..2.0, r in 0.0f64..3.0, dr in 1e-4f64..0.5) {
        let m = KernelModel::matern(nu, rho).unwrap();
        let a = m.eval(r);
        let b = m.eval(r + dr);
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(b <= a * (1.0 + 1e-12));
    }
}
