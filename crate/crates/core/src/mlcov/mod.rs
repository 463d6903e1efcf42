//! Tapered multi-level covariance `C_W = W C W^T`, assembled block by block.

mod exact;
mod lemma;

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use faer::{Accum, Mat, MatRef};
use serde::Serialize;

use crate::basis::{ContrastGroup, MultiLevelBasis};
use crate::error::{Error, Result};
use crate::geometry::{CubeId, DecompositionTree, Tau};
use crate::kernels::{Covariance, KernelSpec};
use crate::linalg::dense::gemm;
use crate::linalg::SparseSpd;

pub use exact::{matvec_exact, ExactOperator};
pub use lemma::{ball_bound, lemma1_bound, separated_pairs, Lemma1Bound};

/// Kernel block entries per chunk when forming `Psi_A^T K(A, R)`.
const CHUNK_ENTRIES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockIndex {
    pub level: i32,
    pub code: u64,
    pub rows: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct TaperedCovariance {
    matrix: SparseSpd,
    min_level: i32,
    tau: Tau,
    kernel: KernelSpec,
    theta: Vec<f64>,
    blocks: Vec<BlockIndex>,
    level_pairs: BTreeMap<(i32, i32), usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelPairStats {
    pub row_level: i32,
    pub col_level: i32,
    pub entries: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovStats {
    pub size: usize,
    pub stored: usize,
    /// Stored fraction of the upper triangle, diagonal included.
    pub density: f64,
    pub min_diag: f64,
    pub max_diag: f64,
    pub level_pairs: Vec<LevelPairStats>,
}

impl TaperedCovariance {
    /// Upper triangle of `C~_W^i`.
    pub fn matrix(&self) -> &SparseSpd {
        &self.matrix
    }

    pub fn into_matrix(self) -> SparseSpd {
        self.matrix
    }

    pub fn min_level(&self) -> i32 {
        self.min_level
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn size(&self) -> usize {
        self.matrix.n()
    }

    pub fn blocks(&self) -> &[BlockIndex] {
        &self.blocks
    }

    pub fn block_rows(&self, level: i32, code: u64) -> Option<Range<usize>> {
        self.blocks.iter().find(|b| b.level == level && b.code == code).map(|b| b.rows.clone())
    }

    /// `None` for structurally zero entries.
    pub fn entry(&self, a: usize, b: usize) -> Option<f64> {
        self.matrix.get(a, b)
    }

    pub fn density(&self) -> f64 {
        let m = self.size() as f64;
        if m == 0.0 {
            return 0.0;
        }
        self.matrix.nnz() as f64 / (m * (m + 1.0) / 2.0)
    }

    /// `D_W`, the diagonal of `C_W`. Diagonal blocks are always stored, so
    /// these are exact.
    pub fn diag_preconditioner(&self) -> Result<Vec<f64>> {
        check_positive(self.matrix.diag())
    }

    pub fn stats(&self) -> CovStats {
        let d = self.matrix.diag();
        CovStats {
            size: self.size(),
            stored: self.matrix.nnz(),
            density: self.density(),
            min_diag: d.iter().copied().fold(f64::INFINITY, f64::min),
            max_diag: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            level_pairs: self
                .level_pairs
                .iter()
                .map(|(&(row_level, col_level), &entries)| LevelPairStats { row_level, col_level, entries })
                .collect(),
        }
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        self.matrix.write_triplets(path)
    }
}

pub(crate) fn check_positive(d: Vec<f64>) -> Result<Vec<f64>> {
    match d.iter().position(|&v| !(v > 0.0)) {
        Some(row) => Err(Error::Numerical(format!("non-positive diagonal {} at contrast row {row}", d[row]))),
        None => Ok(d),
    }
}

/// One row group against the groups found under a region of tree positions.
struct Job {
    group: usize,
    region: Range<usize>,
    targets: Vec<usize>,
}

fn subtree_groups(tree: &DecompositionTree, index: &[Option<usize>], root: CubeId, out: &mut Vec<usize>) {
    let mut stack = vec![root];
    while let Some(c) = stack.pop() {
        if let Some(g) = index[c] {
            out.push(g);
        }
        stack.extend(tree.cube(c).children.iter().rev().copied());
    }
}

fn plan(basis: &MultiLevelBasis, tree: &DecompositionTree, tau: Tau, min_level: i32) -> Vec<Job> {
    let groups = basis.groups();
    let mut index = vec![None; tree.cubes().len()];
    for (g, grp) in groups.iter().enumerate() {
        if grp.level >= 0 {
            index[grp.cube] = Some(g);
        }
    }
    let mut jobs = Vec::new();
    for (g, grp) in groups.iter().enumerate() {
        if grp.level < min_level {
            continue;
        }
        if grp.level < 0 {
            let targets = (0..groups.len()).filter(|&b| groups[b].level >= min_level).collect();
            jobs.push(Job { group: g, region: 0..basis.n(), targets });
            continue;
        }
        for nb in tree.neighbors(grp.cube, tau) {
            let mut targets = Vec::new();
            subtree_groups(tree, &index, nb, &mut targets);
            targets.retain(|&b| groups[b].level > grp.level || groups[b].first_row >= grp.first_row);
            if !targets.is_empty() {
                jobs.push(Job { group: g, region: tree.cube(nb).range.clone(), targets });
            }
        }
    }
    jobs
}

fn view(g: &ContrastGroup) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(g.vectors.as_slice(), g.vectors.nrows(), g.vectors.ncols())
}

/// `Psi_A^T K(A, span)` for a contiguous span of tree positions.
pub(crate) fn project_kernel(points: &[[f64; 3]], cov: &Covariance, a: &ContrastGroup, span: Range<usize>) -> Mat<f64> {
    let rows = a.range.len();
    let mut h = Mat::<f64>::zeros(a.count(), span.len());
    let width = (CHUNK_ENTRIES / rows.max(1)).max(1);
    let pa = &points[a.range.clone()];
    let mut start = 0;
    while start < span.len() {
        let w = width.min(span.len() - start);
        let pb = &points[span.start + start..span.start + start + w];
        let k = Mat::<f64>::from_fn(rows, w, |i, j| cov.between(&pa[i], &pb[j]));
        gemm(h.as_mut().subcols_mut(start, w), Accum::Replace, view(a).transpose(), k.as_ref(), 1.0);
        start += w;
    }
    h
}

/// Assembles `C~_W^i` under the level-dependent `tau` criterion, keeping rows of
/// levels `>= min_level` (`-1` adds the root group).
pub fn assemble(basis: &MultiLevelBasis, tree: &DecompositionTree, cov: &Covariance, tau: Tau, min_level: i32) -> Result<TaperedCovariance> {
    if min_level < -1 {
        return Err(Error::InvalidInput(format!("min_level {min_level} is below -1")));
    }
    if tree.num_points() != basis.n() {
        return Err(Error::LengthMismatch { expected: basis.n(), actual: tree.num_points() });
    }
    let groups = basis.groups();
    let size = basis.rows_down_to(min_level);
    let jobs = plan(basis, tree, tau, min_level);

    let mut counts = vec![0usize; size];
    let mut level_pairs: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    for job in &jobs {
        let a = &groups[job.group];
        for &b in &job.targets {
            let bg = &groups[b];
            let entries = if b == job.group {
                for (k, slot) in counts[a.rows()].iter_mut().enumerate() {
                    *slot += k + 1;
                }
                a.count() * (a.count() + 1) / 2
            } else {
                let (lo, hi) = if a.first_row < bg.first_row { (a, bg) } else { (bg, a) };
                for slot in &mut counts[hi.rows()] {
                    *slot += lo.count();
                }
                a.count() * bg.count()
            };
            let key = (a.level.max(bg.level), a.level.min(bg.level));
            *level_pairs.entry(key).or_default() += entries;
        }
    }
    let mut col_ptr = vec![0usize; size + 1];
    for j in 0..size {
        col_ptr[j + 1] = col_ptr[j] + counts[j];
    }
    let nnz = col_ptr[size];
    let mut next = col_ptr[..size].to_vec();
    let mut row_idx = vec![0u32; nnz];
    let mut values = vec![0.0; nnz];

    let points = basis.points();
    for job in &jobs {
        let a = &groups[job.group];
        let lo = job.targets.iter().map(|&b| groups[b].range.start).min().unwrap_or(job.region.start);
        let hi = job.targets.iter().map(|&b| groups[b].range.end).max().unwrap_or(lo);
        let h = project_kernel(points, cov, a, lo..hi);
        for &b in &job.targets {
            let bg = &groups[b];
            let mut block = Mat::<f64>::zeros(a.count(), bg.count());
            let cols = h.as_ref().subcols(bg.range.start - lo, bg.range.len());
            gemm(block.as_mut(), Accum::Replace, cols, view(bg), 1.0);
            for s in 0..bg.count() {
                let rb = bg.first_row + s;
                for r in 0..a.count() {
                    let ra = a.first_row + r;
                    if b == job.group && r > s {
                        continue;
                    }
                    let (row, col) = if ra <= rb { (ra, rb) } else { (rb, ra) };
                    let slot = next[col];
                    row_idx[slot] = row as u32;
                    values[slot] = block[(r, s)];
                    next[col] += 1;
                }
            }
        }
    }

    let blocks = groups
        .iter()
        .filter(|g| g.level >= min_level)
        .map(|g| BlockIndex { level: g.level, code: g.code, rows: g.rows() })
        .collect();
    Ok(TaperedCovariance {
        matrix: SparseSpd::from_unsorted_columns(size, col_ptr, row_idx, values),
        min_level,
        tau,
        kernel: cov.model().spec(),
        theta: cov.model().theta(),
        blocks,
        level_pairs,
    })
}
