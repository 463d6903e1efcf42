mod common;

use mlkrig::basis::{build_basis, design_matrix, read_dump, write_dump, DesignSpec};
use mlkrig::geometry::{build_tree, SpatialDataset};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Columns scaled to unit norm so the residual is relative.
fn normalized_design(data: &SpatialDataset, degree: u32) -> DMatrix<f64> {
    let mut m = design_matrix(data, degree);
    for mut c in m.column_iter_mut() {
        let s = c.norm();
        c /= s;
    }
    m
}

fn check_basis(data: &SpatialDataset, f: u32, f_tilde: u32, tol: f64) {
    let spec = DesignSpec::new(data.dim(), f, f_tilde).unwrap();
    let tree = build_tree(data, spec.p()).unwrap();
    let basis = build_basis(&tree, data, spec).unwrap();
    let n = data.len();
    let p = basis.p();
    assert_eq!(basis.num_contrasts(), n - p);

    let w = basis.dense_w();
    let l = basis.dense_l();
    let q = DMatrix::from_fn(n, n, |i, j| if i < n - p { w[(i, j)] } else { l[(i - (n - p), j)] });
    let orth = max_abs(&(&q * q.transpose() - DMatrix::identity(n, n)));
    assert!(orth <= tol, "[W; L] orthonormality {orth:e}");

    let mf = normalized_design(data, f);
    let ann = max_abs(&(&w * &mf));
    assert!(ann <= tol, "W M_f residual {ann:e}");

    let mft = normalized_design(data, f_tilde);
    let deep = basis.rows_down_to(0);
    let ann_t = max_abs(&(w.rows(0, deep) * &mft));
    assert!(ann_t <= tol, "level >= 0 rows against degree f_tilde {ann_t:e}");

    let (a, b) = basis.annihilation_residuals();
    assert!(a <= tol && b <= tol);
    assert_eq!(basis.nnz_w(), basis.groups().iter().map(|g| g.vectors.len()).sum::<usize>());
    assert!(w.iter().filter(|v| **v != 0.0).count() <= basis.nnz_w());
}

#[test]
fn orthonormal_and_annihilating() {
    for (dim, n, f, ft, seed) in [(2, 600, 3, 4, 1), (2, 400, 2, 2, 2), (3, 500, 2, 3, 3), (3, 300, 1, 2, 4), (2, 50, 0, 1, 5)] {
        check_basis(&common::uniform(n, dim, seed), f, ft, 1e-11);
    }
}

#[test]
fn operators_match_dense() {
    let (data, _, basis) = common::setup(700, 2, 3, 4, 6);
    let v = common::normal_vec(data.len(), 7);
    let u = common::normal_vec(basis.num_contrasts(), 8);
    let g = common::normal_vec(basis.p(), 9);
    let (w, l) = (basis.dense_w(), basis.dense_l());
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()));
    let dv = nalgebra::DVector::from_column_slice(&v);
    let du = nalgebra::DVector::from_column_slice(&u);
    let dg = nalgebra::DVector::from_column_slice(&g);
    assert!(close(&basis.apply_w(&v).unwrap(), (&w * &dv).as_slice()));
    assert!(close(&basis.apply_wt(&u).unwrap(), (w.transpose() * &du).as_slice()));
    assert!(close(&basis.apply_l(&v).unwrap(), (&l * &dv).as_slice()));
    assert!(close(&basis.apply_lt(&g).unwrap(), (l.transpose() * &dg).as_slice()));
    assert!(basis.apply_w(&v[1..]).is_err());
    assert_eq!(basis.from_tree_order(&basis.to_tree_order(&v)), v);
}

#[test]
fn level_layout_is_consistent() {
    let (_, tree, basis) = common::setup(900, 3, 2, 3, 10);
    let stats = basis.level_stats();
    assert_eq!(stats.iter().map(|s| s.rows).sum::<usize>(), basis.num_contrasts());
    assert_eq!(stats.iter().map(|s| s.nnz).sum::<usize>(), basis.nnz_w());
    assert!(stats.windows(2).all(|w| w[0].level > w[1].level));
    let mut next = 0;
    for s in &stats {
        let r = basis.level_rows(s.level);
        assert_eq!(r.start, next);
        assert_eq!(r.len(), s.rows);
        next = r.end;
    }
    assert!(basis.max_level() <= tree.max_level());
    assert_eq!(basis.rows_down_to(-1), basis.num_contrasts());
    for g in basis.groups() {
        assert!(g.count() <= g.range.len());
    }
}

#[test]
fn dump_round_trip() {
    let (data, _, basis) = common::setup(300, 2, 2, 3, 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.bin");
    write_dump(&basis, &path).unwrap();
    let dump = read_dump(&path).unwrap();
    let mut w = DMatrix::zeros(basis.num_contrasts(), data.len());
    for &(i, j, v) in &dump.w {
        w[(i as usize, j as usize)] = v;
    }
    assert_eq!(w, basis.dense_w());
    let mut l = DMatrix::zeros(basis.p(), data.len());
    for &(i, j, v) in &dump.l {
        l[(i as usize, j as usize)] = v;
    }
    assert_eq!(l, basis.dense_l());
    assert_eq!(dump.levels.iter().map(|x| x.2).sum::<u64>() as usize, basis.num_contrasts());

    std::fs::write(&path, b"NOTABASIS").unwrap();
    assert!(read_dump(&path).is_err());
}

#[test]
fn invalid_specs_rejected() {
    assert!(DesignSpec::new(2, 3, 2).is_err());
    assert!(DesignSpec::new(4, 1, 1).is_err());
    let data = common::uniform(5, 2, 12);
    let spec = DesignSpec::new(2, 2, 2).unwrap();
    let tree = build_tree(&data, spec.p()).unwrap();
    assert!(build_basis(&tree, &data, spec).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_point_sets(dim in 2usize..=3, f in 0u32..=2, extra in 0u32..=1, n_extra in 0usize..120, seed in 0u64..1000) {
        let spec = DesignSpec::new(dim, f, f + extra).unwrap();
        let n = spec.p() + 1 + n_extra;
        check_basis(&common::uniform(n, dim, seed), f, f + extra, 1e-10);
    }
}
