use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix stored as its upper triangle (diagonal included) in
/// compressed sparse column form with sorted row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpd {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseSpd {
    /// Validates and wraps upper-triangular CSC arrays (rows sorted per column).
    pub fn from_upper_csc(n: usize, col_ptr: Vec<usize>, row_idx: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if col_ptr.len() != n + 1 || col_ptr[0] != 0 || *col_ptr.last().unwrap() != row_idx.len() {
            return Err(Error::InvalidInput("malformed column pointers".into()));
        }
        if row_idx.len() != values.len() {
            return Err(Error::LengthMismatch { expected: row_idx.len(), actual: values.len() });
        }
        for j in 0..n {
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.last().is_some_and(|&r| r as usize > j) {
                return Err(Error::InvalidInput(format!("column {j} is not sorted upper-triangular")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self { n, col_ptr, row_idx, values })
    }

    /// Builds from per-column unsorted `(row, value)` lists with `row <= col`.
    pub(crate) fn from_unsorted_columns(n: usize, col_ptr: Vec<usize>, mut row_idx: Vec<u32>, mut values: Vec<f64>) -> Self {
        let mut perm: Vec<usize> = Vec::new();
        let mut tmp_r: Vec<u32> = Vec::new();
        let mut tmp_v: Vec<f64> = Vec::new();
        for j in 0..n {
            let (s, e) = (col_ptr[j], col_ptr[j + 1]);
            let rows = &row_idx[s..e];
            if rows.windows(2).all(|w| w[0] < w[1]) {
                continue;
            }
            perm.clear();
            perm.extend(0..e - s);
            perm.sort_unstable_by_key(|&k| rows[k]);
            tmp_r.clear();
            tmp_v.clear();
            tmp_r.extend(perm.iter().map(|&k| row_idx[s + k]));
            tmp_v.extend(perm.iter().map(|&k| values[s + k]));
            row_idx[s..e].copy_from_slice(&tmp_r);
            values[s..e].copy_from_slice(&tmp_v);
        }
        Self { n, col_ptr, row_idx, values }
    }

    /// Entries from either triangle are mirrored into the upper one;
    /// duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            counts[i.max(j) + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0u32; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            let (r, c) = (i.min(j), i.max(j));
            rows[next[c]] = r as u32;
            vals[next[c]] = v;
            next[c] += 1;
        }
        let m = Self::from_unsorted_columns(n, counts, rows, vals);
        // Merge duplicates.
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(m.row_idx.len());
        let mut values = Vec::with_capacity(m.values.len());
        for j in 0..n {
            for k in m.col_ptr[j]..m.col_ptr[j + 1] {
                let r = m.row_idx[k];
                if row_idx.len() > col_ptr[j] && *row_idx.last().unwrap() == r {
                    *values.last_mut().unwrap() += m.values[k];
                } else {
                    row_idx.push(r);
                    values.push(m.values[k]);
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Self::from_upper_csc(n, col_ptr, row_idx, values)
    }

    /// Keeps the structurally nonzero upper triangle of a symmetric matrix.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidInput("matrix is not square".into()));
        }
        let scale = a.abs().max().max(f64::MIN_POSITIVE);
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!("matrix is not symmetric at ({i}, {j})")));
                }
                if a[(i, j)] != 0.0 || i == j {
                    row_idx.push(i as u32);
                    values.push(a[(i, j)]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self::from_upper_csc(n, col_ptr, row_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            n: d.len(),
            col_ptr: (0..=d.len()).collect(),
            row_idx: (0..d.len() as u32).collect(),
            values: d.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries of the upper triangle.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Structural nonzeros of the full symmetric matrix.
    pub fn nnz_full(&self) -> usize {
        let diag = (0..self.n).filter(|&j| self.get(j, j).is_some()).count();
        2 * self.nnz() - diag
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[u32] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Upper-triangle entries `(row, value)` of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().map(|&i| i as usize).zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (r, c) = (i.min(j), i.max(j));
        let s = self.col_ptr[c];
        let rows = &self.row_idx[s..self.col_ptr[c + 1]];
        rows.binary_search(&(r as u32)).ok().map(|k| self.values[s + k])
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j).unwrap_or(0.0)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let xj = x[j];
            let mut acc = 0.0;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k] as usize;
                let v = self.values[k];
                if i == j {
                    acc += v * xj;
                } else {
                    y[i] += v * xj;
                    acc += v * x[i];
                }
            }
            y[j] += acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    /// Leading principal submatrix of order `m`.
    pub fn leading(&self, m: usize) -> Self {
        let m = m.min(self.n);
        let end = self.col_ptr[m];
        Self {
            n: m,
            col_ptr: self.col_ptr[..=m].to_vec(),
            row_idx: self.row_idx[..end].to_vec(),
            values: self.values[..end].to_vec(),
        }
    }

    /// `B = P A P^T` where `perm[new] = old`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut pinv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        let mut counts = vec![0usize; n + 1];
        for j in 0..n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let (a, b) = (pinv[self.row_idx[k] as usize], pinv[j]);
                counts[a.max(b) + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for j in 0..n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let (a, b) = (pinv[self.row_idx[k] as usize], pinv[j]);
                let c = a.max(b);
                rows[next[c]] = a.min(b) as u32;
                vals[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        Self::from_unsorted_columns(n, counts, rows, vals)
    }

    /// One `row col value` line per stored upper entry, 17 significant digits.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "% symmetric {} {} {}", self.n, self.n, self.nnz())?;
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                writeln!(out, "{i} {j} {v:.16e}")?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_triplets(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut n = None;
        let mut triplets = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('%') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.first() == Some(&"symmetric") {
                    n = parts.get(1).and_then(|s| s.parse().ok());
                }
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: expected 'row col value'", lineno + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let i: usize = parts[0].parse().map_err(|_| bad())?;
            let j: usize = parts[1].parse().map_err(|_| bad())?;
            let v: f64 = parts[2].parse().map_err(|_| bad())?;
            triplets.push((i, j, v));
        }
        let n = n.unwrap_or_else(|| triplets.iter().map(|t| t.0.max(t.1) + 1).max().unwrap_or(0));
        Self::from_triplets(n, &triplets)
    }
}
