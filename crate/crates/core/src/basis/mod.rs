//! Orthonormal multi-level contrast basis `P = [W; L]`.

mod dump;
pub mod poly;
mod qr;

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CubeId, DecompositionTree, SpatialDataset};

pub use dump::{read_dump, write_dump, BasisDump};
pub use poly::{design_matrix, trend_vector, PolySpace, PolynomialBasis};
pub use qr::{pivoted_qr, PivotedQr, RANK_TOL};

/// Trend degree `f`, basis degree `f_tilde >= f` and the polynomial family
/// used for moment computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignSpec {
    pub dim: usize,
    pub f: u32,
    pub f_tilde: u32,
    #[serde(default)]
    pub polynomial: PolynomialBasis,
}

impl DesignSpec {
    pub fn new(dim: usize, f: u32, f_tilde: u32) -> Result<Self> {
        if f_tilde < f {
            return Err(Error::InvalidInput(format!("f_tilde ({f_tilde}) must be at least f ({f})")));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidInput(format!("unsupported dimension {dim}")));
        }
        Ok(Self {
            dim,
            f,
            f_tilde,
            polynomial: PolynomialBasis::Chebyshev,
        })
    }

    pub fn with_polynomial(mut self, polynomial: PolynomialBasis) -> Self {
        self.polynomial = polynomial;
        self
    }

    /// Trend monomial count.
    pub fn p(&self) -> usize {
        poly::count(self.dim, self.f)
    }

    /// Accuracy parameter.
    pub fn p_tilde(&self) -> usize {
        poly::count(self.dim, self.f_tilde)
    }
}

/// Contrast vectors of one cube (or the root extra group at level `-1`),
/// stored densely over the cube's contiguous range of tree positions.
#[derive(Debug, Clone)]
pub struct ContrastGroup {
    pub level: i32,
    pub code: u64,
    pub cube: CubeId,
    pub range: Range<usize>,
    pub first_row: usize,
    /// `|range| x count`, one column per contrast.
    pub vectors: DMatrix<f64>,
}

impl ContrastGroup {
    pub fn count(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn rows(&self) -> Range<usize> {
        self.first_row..self.first_row + self.count()
    }
}

#[derive(Debug, Clone)]
pub struct MultiLevelBasis {
    spec: DesignSpec,
    order: Vec<usize>,
    points: Vec<[f64; 3]>,
    groups: Vec<ContrastGroup>,
    by_cube: HashMap<CubeId, usize>,
    extra: Option<usize>,
    /// Rows of `L` as columns, `n x p`, in tree order.
    l_vectors: DMatrix<f64>,
    max_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: i32,
    pub groups: usize,
    pub rows: usize,
    pub nnz: usize,
}

impl MultiLevelBasis {
    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn p(&self) -> usize {
        self.l_vectors.ncols()
    }

    /// Number of contrast rows, `n - p`.
    pub fn num_contrasts(&self) -> usize {
        self.n() - self.p()
    }

    /// Tree position to original point id.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Locations in tree order.
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Groups in row order: finest level first, level `-1` last.
    pub fn groups(&self) -> &[ContrastGroup] {
        &self.groups
    }

    pub fn group_of_cube(&self, cube: CubeId) -> Option<&ContrastGroup> {
        self.by_cube.get(&cube).map(|&g| &self.groups[g])
    }

    pub fn extra_group(&self) -> Option<&ContrastGroup> {
        self.extra.map(|g| &self.groups[g])
    }

    pub fn l_vectors(&self) -> &DMatrix<f64> {
        &self.l_vectors
    }

    /// Deepest tree level.
    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Deepest level that carries contrast rows (ignoring level `-1`).
    pub fn deepest_contrast_level(&self) -> Option<u32> {
        self.groups.iter().filter(|g| g.level >= 0).map(|g| g.level as u32).max()
    }

    /// Number of leading rows belonging to levels `>= min_level`.
    pub fn rows_down_to(&self, min_level: i32) -> usize {
        self.groups
            .iter()
            .filter(|g| g.level >= min_level)
            .map(ContrastGroup::count)
            .sum()
    }

    /// Row range of one level.
    pub fn level_rows(&self, level: i32) -> Range<usize> {
        let mut it = self.groups.iter().filter(|g| g.level == level);
        match it.next() {
            None => {
                let start = self.rows_down_to(level);
                start..start
            }
            Some(first) => {
                let end = it.last().map_or(first.rows().end, |g| g.rows().end);
                first.first_row..end
            }
        }
    }

    pub fn nnz_w(&self) -> usize {
        self.groups.iter().map(|g| g.vectors.len()).sum()
    }

    pub fn level_stats(&self) -> Vec<LevelStats> {
        let mut levels: Vec<i32> = self.groups.iter().map(|g| g.level).collect();
        levels.dedup();
        levels
            .into_iter()
            .map(|level| {
                let gs: Vec<&ContrastGroup> = self.groups.iter().filter(|g| g.level == level).collect();
                LevelStats {
                    level,
                    groups: gs.len(),
                    rows: gs.iter().map(|g| g.count()).sum(),
                    nnz: gs.iter().map(|g| g.vectors.len()).sum(),
                }
            })
            .collect()
    }

    fn check_len(&self, len: usize, expected: usize) -> Result<()> {
        if len == expected {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected, actual: len })
        }
    }

    /// Permutes a vector from dataset order into tree order.
    pub fn to_tree_order(&self, v: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| v[i]).collect()
    }

    pub fn from_tree_order(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            out[i] = v[pos];
        }
        out
    }

    /// `W v` for `v` in dataset order.
    pub fn apply_w(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len(), self.n())?;
        Ok(self.apply_w_tree(&self.to_tree_order(v)))
    }

    /// `W v` for `v` in tree order.
    pub fn apply_w_tree(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_contrasts()];
        for g in &self.groups {
            let seg = &v[g.range.clone()];
            for (c, slot) in out[g.rows()].iter_mut().enumerate() {
                *slot = dot(g.vectors.column(c).as_slice(), seg);
            }
        }
        out
    }

    /// `W^T u`, result in dataset order.
    pub fn apply_wt(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len(), self.num_contrasts())?;
        Ok(self.from_tree_order(&self.apply_wt_tree(u)))
    }

    /// `W^T u` in tree order. Rows past `u.len()` are treated as zero.
    pub fn apply_wt_tree(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for g in &self.groups {
            if g.first_row >= u.len() {
                continue;
            }
            let seg = &mut out[g.range.clone()];
            for (c, &coef) in u[g.rows()].iter().enumerate() {
                if coef != 0.0 {
                    axpy(coef, g.vectors.column(c).as_slice(), seg);
                }
            }
        }
        out
    }

    pub fn apply_l(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len(), self.n())?;
        Ok(self.apply_l_tree(&self.to_tree_order(v)))
    }

    pub fn apply_l_tree(&self, v: &[f64]) -> Vec<f64> {
        (0..self.p()).map(|j| dot(self.l_vectors.column(j).as_slice(), v)).collect()
    }

    pub fn apply_lt(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len(), self.p())?;
        Ok(self.from_tree_order(&self.apply_lt_tree(u)))
    }

    pub fn apply_lt_tree(&self, u: &[f64]) -> Vec<f64> {
        let v = &self.l_vectors * DVector::from_column_slice(u);
        v.as_slice().to_vec()
    }

    /// Dense `W`, columns in dataset order.
    pub fn dense_w(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.num_contrasts(), self.n());
        for g in &self.groups {
            for (local, pos) in g.range.clone().enumerate() {
                let col = self.order[pos];
                for c in 0..g.count() {
                    w[(g.first_row + c, col)] = g.vectors[(local, c)];
                }
            }
        }
        w
    }

    /// Dense `L`, columns in dataset order.
    pub fn dense_l(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.p(), self.n());
        for (pos, &col) in self.order.iter().enumerate() {
            for j in 0..self.p() {
                l[(j, col)] = self.l_vectors[(pos, j)];
            }
        }
        l
    }

    /// Largest `|W g|` over unit-normalized global monomial columns `g`:
    /// degree `f` against all rows, and degree `f_tilde` against levels `0..=t`.
    pub fn annihilation_residuals(&self) -> (f64, f64) {
        let dim = self.spec.dim;
        let worst = |degree: u32, min_level: i32| -> f64 {
            let space = PolySpace::new(PolynomialBasis::Monomial, dim, degree);
            let mut m = DMatrix::zeros(self.n(), space.len());
            let mut row = vec![0.0; space.len()];
            for (pos, p) in self.points.iter().enumerate() {
                space.eval(p, &mut row);
                for (j, v) in row.iter().enumerate() {
                    m[(pos, j)] = *v;
                }
            }
            let mut out = 0.0f64;
            for j in 0..m.ncols() {
                let col = m.column(j);
                let scale = col.norm();
                for g in self.groups.iter().filter(|g| g.level >= min_level) {
                    let seg = col.rows(g.range.start, g.range.len());
                    for c in 0..g.count() {
                        out = out.max((g.vectors.column(c).dot(&seg) / scale).abs());
                    }
                }
            }
            out
        };
        (worst(self.spec.f, -1), worst(self.spec.f_tilde, 0))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Builds `W` and `L` bottom-up over the tree.
pub fn build_basis(tree: &DecompositionTree, data: &SpatialDataset, spec: DesignSpec) -> Result<MultiLevelBasis> {
    if spec.dim != data.dim() || tree.dim() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: spec {}, tree {}, data {}",
            spec.dim,
            tree.dim(),
            data.dim()
        )));
    }
    let n = data.len();
    if tree.num_points() != n {
        return Err(Error::LengthMismatch { expected: n, actual: tree.num_points() });
    }
    let p = spec.p();
    if n < p {
        return Err(Error::InvalidInput(format!("need at least p = {p} locations, got {n}")));
    }
    let order = tree.order().to_vec();
    let points: Vec<[f64; 3]> = order.iter().map(|&i| *data.point(i)).collect();
    let space = PolySpace::new(spec.polynomial, spec.dim, spec.f_tilde);

    let mut scaling: Vec<Option<DMatrix<f64>>> = vec![None; tree.cubes().len()];
    let mut per_level: Vec<Vec<ContrastGroup>> = vec![Vec::new(); tree.max_level() as usize + 1];

    for level in (0..=tree.max_level()).rev() {
        for &cid in tree.level(level) {
            let cube = tree.cube(cid);
            let m = cube.len();
            let v = space.local_matrix(&points[cube.range.clone()], &cube.lower_corner, cube.side_length);
            // Children's scaling vectors form a block-diagonal input basis.
            let blocks: Vec<(usize, DMatrix<f64>)> = if cube.is_leaf() {
                vec![(0, DMatrix::identity(m, m))]
            } else {
                cube.children
                    .iter()
                    .map(|&c| {
                        let off = tree.cube(c).range.start - cube.range.start;
                        (off, scaling[c].take().expect("child processed before parent"))
                    })
                    .collect()
            };
            let r_in: usize = blocks.iter().map(|(_, s)| s.ncols()).sum();
            let mut mom = DMatrix::zeros(r_in, v.ncols());
            let mut col = 0;
            for (off, s) in &blocks {
                let part = s.transpose() * v.rows(*off, s.nrows());
                mom.rows_mut(col, s.ncols()).copy_from(&part);
                col += s.ncols();
            }
            let qr = pivoted_qr(&mom);
            let mut rotated = DMatrix::zeros(m, r_in);
            let mut col = 0;
            for (off, s) in &blocks {
                let part = s * qr.q.rows(col, s.ncols());
                rotated.rows_mut(*off, s.nrows()).copy_from(&part);
                col += s.ncols();
            }
            if qr.rank < r_in {
                per_level[level as usize].push(ContrastGroup {
                    level: level as i32,
                    code: cube.code,
                    cube: cid,
                    range: cube.range.clone(),
                    first_row: 0,
                    vectors: rotated.columns(qr.rank, r_in - qr.rank).into_owned(),
                });
            }
            scaling[cid] = Some(rotated.columns(0, qr.rank).into_owned());
        }
    }

    // Split the root's scaling vectors against the trend moments.
    let root = tree.root();
    let s_root = scaling[0].take().expect("root processed");
    let trend = PolySpace::new(spec.polynomial, spec.dim, spec.f);
    let m_f = trend.local_matrix(&points, &root.lower_corner, root.side_length);
    let qr = pivoted_qr(&(s_root.transpose() * &m_f));
    if qr.rank < p {
        return Err(Error::RankDeficient { degree: spec.f, rank: qr.rank, required: p });
    }
    let rotated = &s_root * &qr.q;
    let l_vectors = rotated.columns(0, p).into_owned();
    let extra_count = rotated.ncols() - p;

    let mut groups = Vec::new();
    let mut row = 0;
    for level_groups in per_level.into_iter().rev() {
        for mut g in level_groups {
            g.first_row = row;
            row += g.count();
            groups.push(g);
        }
    }
    let mut extra = None;
    if extra_count > 0 {
        extra = Some(groups.len());
        groups.push(ContrastGroup {
            level: -1,
            code: 0,
            cube: 0,
            range: 0..n,
            first_row: row,
            vectors: rotated.columns(p, extra_count).into_owned(),
        });
        row += extra_count;
    }
    if row != n - p {
        return Err(Error::Numerical(format!(
            "basis construction produced {row} contrasts, expected {}",
            n - p
        )));
    }
    let by_cube = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.level >= 0)
        .map(|(i, g)| (g.cube, i))
        .collect();
    Ok(MultiLevelBasis {
        spec,
        order,
        points,
        groups,
        by_cube,
        extra,
        l_vectors,
        max_level: tree.max_level(),
    })
}
