mod common;

use common::{dense_kernel, random_vec, setup};
use mlkrig::basis::{build_basis, DesignSpec};
use mlkrig::geometry::{build_tree, SpatialDataset, Tau};
use mlkrig::kernels::{Covariance, KernelModel};
use mlkrig::mlcov::*;
use mlkrig::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn dense_cw(model: &KernelModel, data: &SpatialDataset, basis: &mlkrig::basis::MultiLevelBasis) -> DMatrix<f64> {
    let w = basis.dense_w();
    &w * dense_kernel(model, data) * w.transpose()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn full_assembly_matches_dense_congruence() {
    let (data, tree, basis) = setup(200, 2, 2, 3, 1);
    let model = KernelModel::matern(1.5, 0.2).unwrap();
    let cov = assemble(&basis, &tree, &Covariance::exact(model), Tau::Infinite, -1).unwrap();
    let dense = dense_cw(&model, &data, &basis);
    assert_eq!(cov.size(), basis.num_contrasts());
    assert!(max_abs_diff(&cov.matrix().to_dense(), &dense) <= 1e-10);
    assert!((cov.density() - 1.0).abs() < 1e-12);
}

#[test]
fn full_assembly_matches_dense_in_3d() {
    let (data, tree, basis) = setup(300, 3, 1, 2, 2);
    let model = KernelModel::exponential(0.3).unwrap();
    let cov = assemble(&basis, &tree, &Covariance::exact(model), Tau::Infinite, -1).unwrap();
    assert!(max_abs_diff(&cov.matrix().to_dense(), &dense_cw(&model, &data, &basis)) <= 1e-10);
}

#[test]
fn tapered_entries_are_exact_double_sums_on_pattern() {
    let (data, tree, basis) = setup(250, 2, 1, 2, 3);
    let model = KernelModel::matern(0.5, 0.15).unwrap();
    let cov = assemble(&basis, &tree, &Covariance::exact(model), Tau::Finite(1), 0).unwrap();
    let w = basis.dense_w();
    let k = dense_kernel(&model, &data);
    let m = cov.size();
    let row_block = |r: usize| cov.blocks().iter().find(|b| b.rows.contains(&r)).unwrap().clone();
    let mut stored = 0;
    for a in 0..m {
        for b in a..m {
            let (ba, bb) = (row_block(a), row_block(b));
            let admissible = tree.taper_predicate(ba.level, ba.code, bb.level, bb.code, Tau::Finite(1)).unwrap();
            match cov.entry(a, b) {
                Some(v) => {
                    stored += 1;
                    assert!(admissible, "stored entry ({a},{b}) fails the criterion");
                    let mut want = 0.0;
                    for h in 0..basis.n() {
                        if w[(a, h)] == 0.0 {
                            continue;
                        }
                        for e in 0..basis.n() {
                            want += w[(a, h)] * w[(b, e)] * k[(h, e)];
                        }
                    }
                    assert!((v - want).abs() <= 1e-10, "({a},{b}): {v} vs {want}");
                }
                None => assert!(!admissible, "admissible entry ({a},{b}) missing"),
            }
        }
    }
    assert_eq!(stored, cov.matrix().nnz());
    assert!(cov.density() < 1.0);
}

#[test]
fn min_level_keeps_a_leading_block() {
    let (_, tree, basis) = setup(400, 2, 1, 2, 4);
    let cov = Covariance::exact(KernelModel::exponential(0.2).unwrap());
    let full = assemble(&basis, &tree, &cov, Tau::Finite(1), -1).unwrap();
    let t = basis.deepest_contrast_level().unwrap() as i32;
    for i in 0..=t {
        let part = assemble(&basis, &tree, &cov, Tau::Finite(1), i).unwrap();
        assert_eq!(part.size(), basis.rows_down_to(i));
        let lead = full.matrix().leading(part.size()).to_dense();
        assert!(max_abs_diff(&part.matrix().to_dense(), &lead) == 0.0);
    }
}

#[test]
fn taper_error_shrinks_with_tau() {
    let (data, tree, basis) = setup(500, 2, 1, 3, 5);
    let model = KernelModel::matern(1.5, 0.1).unwrap();
    let exact = dense_cw(&model, &data, &basis);
    let mut last = f64::INFINITY;
    for tau in [Tau::Finite(0), Tau::Finite(1), Tau::Finite(2), Tau::Finite(3), Tau::Infinite] {
        let cov = assemble(&basis, &tree, &Covariance::exact(model), tau, -1).unwrap();
        let err = (cov.matrix().to_dense() - &exact).norm();
        assert!(err <= last * (1.0 + 1e-12), "tau {tau}: {err} > {last}");
        last = err;
    }
    assert!(last <= 1e-10);
}

#[test]
fn off_pattern_entries_decay_with_moment_degree() {
    let model = KernelModel::matern(1.5, 0.3).unwrap();
    let mut last = f64::INFINITY;
    for f_tilde in [1, 2, 3] {
        let (data, tree, basis) = setup(600, 2, 1, f_tilde, 6);
        let full = dense_cw(&model, &data, &basis);
        let cov = assemble(&basis, &tree, &Covariance::exact(model), Tau::Finite(1), -1).unwrap();
        let m = cov.size();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in a..m {
                if cov.entry(a, b).is_none() {
                    worst = worst.max(full[(a, b)].abs());
                }
            }
        }
        assert!(worst < last, "f_tilde {f_tilde}: {worst} >= {last}");
        last = worst;
    }
}

#[test]
fn stored_counts_track_level_pairs() {
    let (_, tree, basis) = setup(800, 2, 1, 2, 7);
    let cov = assemble(&basis, &tree, &Covariance::exact(KernelModel::exponential(0.2).unwrap()), Tau::Finite(1), -1).unwrap();
    let stats = cov.stats();
    assert_eq!(stats.stored, cov.matrix().nnz());
    assert_eq!(stats.level_pairs.iter().map(|p| p.entries).sum::<usize>(), stats.stored);
    assert!(stats.min_diag > 0.0 && stats.min_diag <= stats.max_diag);
    assert!(stats.density > 0.0 && stats.density < 1.0);
}

#[test]
fn triplet_export_round_trips() {
    let (_, tree, basis) = setup(120, 2, 1, 2, 8);
    let cov = assemble(&basis, &tree, &Covariance::exact(KernelModel::exponential(0.2).unwrap()), Tau::Finite(1), -1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cw.txt");
    cov.write_triplets(&path).unwrap();
    let back = mlkrig::linalg::SparseSpd::read_triplets(&path).unwrap();
    assert_eq!(back.nnz(), cov.matrix().nnz());
    assert!(max_abs_diff(&back.to_dense(), &cov.matrix().to_dense()) == 0.0);
}

#[test]
fn diagonal_is_exact_and_positive() {
    let (data, tree, basis) = setup(200, 2, 2, 3, 9);
    let model = KernelModel::matern(1.0, 0.25).unwrap();
    let dense = dense_cw(&model, &data, &basis);
    let cov = Covariance::exact(model);
    let tapered = assemble(&basis, &tree, &cov, Tau::Finite(0), -1).unwrap();
    let d1 = tapered.diag_preconditioner().unwrap();
    let d2 = ExactOperator::new(&basis, &cov).diag_preconditioner().unwrap();
    for (r, (&a, &b)) in d1.iter().zip(&d2).enumerate() {
        assert!(a > 0.0 && b > 0.0);
        assert!((a - dense[(r, r)]).abs() <= 1e-12);
        assert!((b - dense[(r, r)]).abs() <= 1e-12);
    }
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[test]
fn single_contrast_diagonal_by_hand() {
    let pts = [[0.1, 0.2], [0.8, 0.3], [0.4, 0.9], [0.6, 0.6]];
    let data = SpatialDataset::from_flat(2, &pts.concat(), None).unwrap();
    let spec = DesignSpec::new(2, 1, 1).unwrap();
    let tree = build_tree(&data, 4).unwrap();
    let basis = build_basis(&tree, &data, spec).unwrap();
    assert_eq!(basis.num_contrasts(), 1);
    // Null vector of [1 x y]^T from signed 3x3 minors.
    let rows: Vec<[f64; 3]> = pts.iter().map(|p| [1.0, p[0], p[1]]).collect();
    let mut psi: Vec<f64> = (0..4)
        .map(|skip| {
            let m: Vec<[f64; 3]> = (0..4).filter(|&h| h != skip).map(|h| rows[h]).collect();
            let s = if skip % 2 == 0 { 1.0 } else { -1.0 };
            s * det3([m[0], m[1], m[2]])
        })
        .collect();
    let norm = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|v| *v /= norm);
    let model = KernelModel::exponential(0.5).unwrap();
    let mut want = 0.0;
    for h in 0..4 {
        for e in 0..4 {
            let r = ((pts[h][0] - pts[e][0]).powi(2) + (pts[h][1] - pts[e][1]).powi(2)).sqrt();
            want += psi[h] * psi[e] * model.eval(r);
        }
    }
    let cov = assemble(&basis, &tree, &Covariance::exact(model), Tau::Infinite, -1).unwrap();
    let d = cov.diag_preconditioner().unwrap();
    assert!((d[0] - want).abs() < 1e-14, "{} vs {want}", d[0]);
    let w = basis.dense_w();
    let dot: f64 = (0..4).map(|h| w[(0, h)] * psi[h]).sum();
    assert!((dot.abs() - 1.0).abs() < 1e-12);
}

#[test]
fn exact_matvec_matches_dense() {
    let (data, _, basis) = setup(300, 2, 1, 2, 10);
    let model = KernelModel::matern(1.0, 0.2).unwrap();
    let cov = Covariance::exact(model);
    let dense = dense_cw(&model, &data, &basis);
    let v = random_vec(basis.num_contrasts(), 11);
    let want = &dense * DVector::from_column_slice(&v);
    let op = ExactOperator::new(&basis, &cov);
    for got in [matvec_exact(&basis, &cov, &v).unwrap(), op.apply(&v).unwrap()] {
        let err = (DVector::from_column_slice(&got) - &want).norm() / want.norm();
        assert!(err <= 1e-10, "{err}");
    }
    let zero = matvec_exact(&basis, &cov, &vec![0.0; v.len()]).unwrap();
    assert!(zero.iter().all(|&z| z == 0.0));
    assert!(matches!(matvec_exact(&basis, &cov, &[1.0]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn exact_operator_is_positive_definite() {
    let (_, _, basis) = setup(300, 2, 1, 2, 12);
    let op = ExactOperator::new(&basis, &Covariance::exact(KernelModel::matern(0.75, 0.2).unwrap()));
    for s in 0..100 {
        let v = random_vec(basis.num_contrasts(), 100 + s);
        let y = op.apply(&v).unwrap();
        let q: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(q > 0.0);
    }
}

#[test]
fn sampled_bound_matches_analytic_gaussian() {
    let rho: f64 = 0.2;
    let model = KernelModel::gaussian(rho).unwrap();
    let (a, b) = ([0.0, 0.0, 0.0], [0.9, 0.0, 0.0]);
    let (ra, rb) = (0.1, 0.15);
    let got = ball_bound(&model, 1, &a, ra, &b, rb, 2).unwrap();
    // Fourth derivative of exp(-z^2 / (2 rho^2)).
    let d4 = |z: f64| {
        let u = z / rho;
        (u.powi(4) - 6.0 * u * u + 3.0) / rho.powi(4) * (-0.5 * u * u).exp()
    };
    let sup = (0..=20000)
        .map(|k| 0.9 - (ra + rb) + 2.0 * (ra + rb) * k as f64 / 20000.0)
        .map(|z| d4(z).abs())
        .fold(0.0, f64::max);
    let want = ra * ra / 2.0 * rb * rb / 2.0 * sup;
    assert!((got - want).abs() <= 0.05 * want, "{got} vs {want}");
}

#[test]
fn bound_scales_with_radius_power() {
    let model = KernelModel::gaussian(1.0).unwrap();
    let (a, b) = ([0.2, 0.3, 0.0], [0.9, 0.8, 0.0]);
    let full = ball_bound(&model, 2, &a, 0.02, &b, 0.02, 2).unwrap();
    let half = ball_bound(&model, 2, &a, 0.01, &b, 0.02, 2).unwrap();
    assert!((half / full - 0.25).abs() < 0.01, "{}", half / full);
}

#[test]
fn bound_dominates_entries_of_separated_pairs() {
    let (data, tree, basis) = setup(500, 2, 1, 2, 13);
    let model = KernelModel::matern(1.5, 0.2).unwrap();
    let full = dense_cw(&model, &data, &basis);
    let pairs: Vec<(usize, usize)> = separated_pairs(&tree, Tau::Finite(1))
        .into_iter()
        .filter(|&(a, b)| basis.group_of_cube(a).is_some() && basis.group_of_cube(b).is_some())
        .take(100)
        .collect();
    assert!(!pairs.is_empty());
    for (a, b) in pairs {
        let (ga, gb) = (basis.group_of_cube(a).unwrap(), basis.group_of_cube(b).unwrap());
        let (ca, cb) = (tree.cube(a), tree.cube(b));
        let bound = lemma1_bound(&tree, &model, basis.spec(), ca.level, ca.code, cb.level, cb.code).unwrap();
        for r in ga.rows() {
            for s in gb.rows() {
                assert!(full[(r, s)].abs() <= bound.value, "{} > {}", full[(r, s)].abs(), bound.value);
            }
        }
    }
}

#[test]
fn bound_rejects_overlapping_cubes() {
    let (_, tree, basis) = setup(200, 2, 1, 2, 14);
    let model = KernelModel::matern(1.5, 0.2).unwrap();
    let r = lemma1_bound(&tree, &model, basis.spec(), 1, 0, 1, 1);
    assert!(matches!(r, Err(Error::OverlappingBalls { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn assembled_matrix_is_symmetric_and_on_pattern(seed in 0u64..1000, n in 60usize..200, tau in 0u32..3) {
        let (data, tree, basis) = setup(n, 2, 1, 2, seed);
        let model = KernelModel::exponential(0.25).unwrap();
        let cov = assemble(&basis, &tree, &Covariance::exact(model), Tau::Finite(tau), -1).unwrap();
        let dense = dense_cw(&model, &data, &basis);
        let m = cov.matrix();
        for j in 0..m.n() {
            for (i, v) in m.column(j) {
                prop_assert!(i <= j);
                prop_assert!((v - dense[(i, j)]).abs() <= 1e-10);
                prop_assert_eq!(m.get(j, i), Some(v));
            }
        }
    }
}
