use std::collections::HashMap;
use std::ops::Range;

use super::morton::{self, cell_of, grid_distance};
use super::{SpatialDataset, Tau};
use crate::error::{Error, Result};

pub type CubeId = usize;

/// A non-empty cube `B^level_code` of the decomposition.
#[derive(Debug, Clone)]
pub struct Cube {
    pub level: u32,
    /// Morton code of the cube within its level.
    pub code: u64,
    pub lower_corner: [f64; 3],
    pub side_length: f64,
    /// Slice of the tree ordering holding this cube's points.
    pub range: Range<usize>,
    pub parent: Option<CubeId>,
    pub children: Vec<CubeId>,
}

impl Cube {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn center(&self, dim: usize) -> [f64; 3] {
        let mut c = [0.0; 3];
        for k in 0..dim {
            c[k] = self.lower_corner[k] + 0.5 * self.side_length;
        }
        c
    }
}

/// Adaptive `2^d`-tree over the unit cube. Cubes holding more than
/// `leaf_threshold` points are split into equal children; empty children are
/// never created.
#[derive(Debug, Clone)]
pub struct DecompositionTree {
    dim: usize,
    leaf_threshold: usize,
    max_level: u32,
    cubes: Vec<Cube>,
    /// Original point ids in tree (depth-first, Morton) order.
    order: Vec<usize>,
    /// Position of each original point id in `order`.
    position: Vec<usize>,
    levels: Vec<Vec<CubeId>>,
    lookup: Vec<HashMap<u64, CubeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeStats {
    pub n: usize,
    pub max_level: u32,
    pub cubes: usize,
    pub leaves: usize,
    pub max_leaf_occupancy: usize,
    pub min_leaf_occupancy: usize,
}

impl DecompositionTree {
    pub fn build(data: &SpatialDataset, leaf_threshold: usize) -> Result<Self> {
        if leaf_threshold == 0 {
            return Err(Error::InvalidInput("leaf_threshold must be at least 1".into()));
        }
        data.check_distinct()?;
        let dim = data.dim();
        let n = data.len();
        let max_depth = (64 / dim as u32) - 1;

        let mut tree = DecompositionTree {
            dim,
            leaf_threshold,
            max_level: 0,
            cubes: Vec::new(),
            order: (0..n).collect(),
            position: vec![0; n],
            levels: Vec::new(),
            lookup: Vec::new(),
        };
        let mut scratch = Vec::with_capacity(n);
        tree.split(data, 0..n, 0, [0; 3], None, max_depth, &mut scratch)?;
        for (pos, &id) in tree.order.iter().enumerate() {
            tree.position[id] = pos;
        }
        Ok(tree)
    }

    #[allow(clippy::too_many_arguments)]
    fn split(
        &mut self,
        data: &SpatialDataset,
        range: Range<usize>,
        level: u32,
        cell: [u64; 3],
        parent: Option<CubeId>,
        max_depth: u32,
        scratch: &mut Vec<usize>,
    ) -> Result<CubeId> {
        let dim = self.dim;
        let side = 0.5f64.powi(level as i32);
        let mut lower = [0.0; 3];
        for k in 0..dim {
            lower[k] = cell[k] as f64 * side;
        }
        let id = self.cubes.len();
        let code = morton::encode(&cell[..dim], dim);
        self.cubes.push(Cube {
            level,
            code,
            lower_corner: lower,
            side_length: side,
            range: range.clone(),
            parent,
            children: Vec::new(),
        });
        if self.levels.len() <= level as usize {
            self.levels.push(Vec::new());
            self.lookup.push(HashMap::new());
        }
        self.levels[level as usize].push(id);
        self.lookup[level as usize].insert(code, id);
        self.max_level = self.max_level.max(level);

        if range.len() <= self.leaf_threshold {
            return Ok(id);
        }
        if level >= max_depth {
            return Err(Error::InvalidInput(format!(
                "cannot separate {} points within depth {max_depth}; locations are nearly coincident",
                range.len()
            )));
        }

        // Stable counting sort of the range by child index.
        let nchild = 1usize << dim;
        let child_of = |id: usize| -> usize {
            let p = data.point(id);
            (0..dim).fold(0usize, |acc, k| acc | (((cell_of(p[k], level + 1) & 1) as usize) << k))
        };
        let mut counts = vec![0usize; nchild + 1];
        for &pid in &self.order[range.clone()] {
            counts[child_of(pid) + 1] += 1;
        }
        for c in 0..nchild {
            counts[c + 1] += counts[c];
        }
        scratch.clear();
        scratch.resize(range.len(), 0);
        let mut next = counts.clone();
        for &pid in &self.order[range.clone()] {
            let c = child_of(pid);
            scratch[next[c]] = pid;
            next[c] += 1;
        }
        self.order[range.clone()].copy_from_slice(scratch);

        let mut children = Vec::new();
        for c in 0..nchild {
            let (lo, hi) = (range.start + counts[c], range.start + counts[c + 1]);
            if lo == hi {
                continue;
            }
            let mut child_cell = [0u64; 3];
            for k in 0..dim {
                child_cell[k] = 2 * cell[k] + ((c >> k) & 1) as u64;
            }
            let child = self.split(data, lo..hi, level + 1, child_cell, Some(id), max_depth, scratch)?;
            children.push(child);
        }
        self.cubes[id].children = children;
        Ok(id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_threshold(&self) -> usize {
        self.leaf_threshold
    }

    /// Deepest level containing a cube (`t`).
    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn root(&self) -> &Cube {
        &self.cubes[0]
    }

    pub fn cube(&self, id: CubeId) -> &Cube {
        &self.cubes[id]
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn num_points(&self) -> usize {
        self.order.len()
    }

    /// Cube ids at a level, in increasing code order.
    pub fn level(&self, level: u32) -> &[CubeId] {
        self.levels.get(level as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn find(&self, level: u32, code: u64) -> Option<CubeId> {
        self.lookup.get(level as usize)?.get(&code).copied()
    }

    fn require(&self, level: i32, code: u64) -> Result<CubeId> {
        if level < 0 {
            return Err(Error::UnknownCube { level, code });
        }
        self.find(level as u32, code).ok_or(Error::UnknownCube { level, code })
    }

    /// Original point ids in tree order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of an original point id within the tree order.
    pub fn position(&self) -> &[usize] {
        &self.position
    }

    pub fn point_ids(&self, id: CubeId) -> &[usize] {
        &self.order[self.cubes[id].range.clone()]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Cube> {
        self.cubes.iter().filter(|c| c.is_leaf())
    }

    /// Grid coordinates of a cube within its level.
    pub fn grid_coords(&self, id: CubeId) -> [u64; 3] {
        morton::decode(self.cubes[id].code, self.dim)
    }

    /// Ancestor of `id` at a coarser (or equal) level.
    pub fn ancestor_at(&self, mut id: CubeId, level: u32) -> CubeId {
        while self.cubes[id].level > level {
            id = self.cubes[id].parent.expect("non-root cube has a parent");
        }
        id
    }

    /// Existing level-`i` cubes within the `tau`-fold dilation of `id`.
    pub fn neighbors(&self, id: CubeId, tau: Tau) -> Vec<CubeId> {
        let cube = &self.cubes[id];
        let level = cube.level;
        match tau {
            Tau::Infinite => self.level(level).to_vec(),
            Tau::Finite(radius) => {
                let dim = self.dim;
                let cells = 1i64 << level;
                let r = radius as i64;
                let count = (2 * r + 1).pow(dim as u32);
                // Scan the level instead of the box when the box is larger.
                if count as usize >= self.level(level).len() {
                    let here = self.grid_coords(id);
                    return self
                        .level(level)
                        .iter()
                        .copied()
                        .filter(|&other| grid_distance(&here, &self.grid_coords(other), dim) <= radius as u64)
                        .collect();
                }
                let here = self.grid_coords(id);
                let mut out = Vec::new();
                let mut offset = vec![-r; dim];
                loop {
                    let mut cell = [0u64; 3];
                    let mut inside = true;
                    for k in 0..dim {
                        let c = here[k] as i64 + offset[k];
                        if c < 0 || c >= cells {
                            inside = false;
                            break;
                        }
                        cell[k] = c as u64;
                    }
                    if inside {
                        if let Some(other) = self.find(level, morton::encode(&cell[..dim], dim)) {
                            out.push(other);
                        }
                    }
                    let mut k = 0;
                    loop {
                        if k == dim {
                            out.sort_by_key(|&c| self.cubes[c].code);
                            return out;
                        }
                        offset[k] += 1;
                        if offset[k] <= r {
                            break;
                        }
                        offset[k] = -r;
                        k += 1;
                    }
                }
            }
        }
    }

    /// Codes of the non-empty level-`i` cubes in `L^{i,tau}_k`.
    pub fn expanded_cube(&self, level: i32, code: u64, tau: Tau) -> Result<Vec<u64>> {
        let id = self.require(level, code)?;
        let mut codes: Vec<u64> = self.neighbors(id, tau).into_iter().map(|c| self.cubes[c].code).collect();
        codes.sort_unstable();
        Ok(codes)
    }

    /// Level-dependent tapering criterion between cube `(i, k)` and `(j, l)`.
    /// Level `-1` denotes the root extra group, which interacts with everything.
    pub fn taper_predicate(&self, i: i32, k: u64, j: i32, l: u64, tau: Tau) -> Result<bool> {
        if i == -1 || j == -1 {
            if i >= 0 {
                self.require(i, k)?;
            }
            if j >= 0 {
                self.require(j, l)?;
            }
            return Ok(true);
        }
        let a = self.require(i, k)?;
        let b = self.require(j, l)?;
        Ok(self.cubes_interact(a, b, tau))
    }

    /// Tapering criterion on cube ids (both at levels `0..=t`).
    pub fn cubes_interact(&self, a: CubeId, b: CubeId, tau: Tau) -> bool {
        let radius = match tau {
            Tau::Infinite => return true,
            Tau::Finite(r) => r as u64,
        };
        let (coarse, fine) = if self.cubes[a].level <= self.cubes[b].level { (a, b) } else { (b, a) };
        let anc = self.ancestor_at(fine, self.cubes[coarse].level);
        grid_distance(&self.grid_coords(coarse), &self.grid_coords(anc), self.dim) <= radius
    }

    pub fn stats(&self) -> TreeStats {
        let occupancy: Vec<usize> = self.leaves().map(Cube::len).collect();
        TreeStats {
            n: self.num_points(),
            max_level: self.max_level,
            cubes: self.cubes.len(),
            leaves: occupancy.len(),
            max_leaf_occupancy: occupancy.iter().copied().max().unwrap_or(0),
            min_leaf_occupancy: occupancy.iter().copied().min().unwrap_or(0),
        }
    }
}
