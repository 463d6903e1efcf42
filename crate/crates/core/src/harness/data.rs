use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SpatialDataset;

/// Stream offsets keep every consumer of a seed on its own ChaCha stream.
pub(crate) const SAMPLE_STREAM: u64 = 1 << 40;
pub(crate) const TARGET_STREAM: u64 = 1 << 41;

/// Disks removed by [`DatasetKind::CarvedDisks`]: `(center, radius)`.
pub const CARVED_DISKS: [([f64; 2], f64); 2] = [([0.25, 0.25], 0.25), ([0.75, 0.75], 0.25)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Uniform2d,
    Uniform3d,
    CarvedDisks,
}

impl DatasetKind {
    pub fn dim(self) -> usize {
        match self {
            DatasetKind::Uniform3d => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Uniform2d => "uniform2d",
            DatasetKind::Uniform3d => "uniform3d",
            DatasetKind::CarvedDisks => "carved_disks",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform2d" => Ok(DatasetKind::Uniform2d),
            "uniform3d" => Ok(DatasetKind::Uniform3d),
            "carved_disks" | "carved" => Ok(DatasetKind::CarvedDisks),
            other => Err(Error::Parse(format!("unknown dataset kind '{other}'"))),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Number of points; for carved sets, the size before carving.
    pub n: usize,
    pub seed: u64,
    /// Smaller sets are prefixes of larger ones drawn with the same seed.
    #[serde(default = "yes")]
    pub nested: bool,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed, nested: true }
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }
}

/// True when `p` lies strictly inside one of the carved disks.
pub fn in_carved_disk(p: &[f64; 3]) -> bool {
    CARVED_DISKS
        .iter()
        .any(|(c, r)| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < r * r)
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            let mut p = [0.0; 3];
            for v in p.iter_mut().take(dim) {
                *v = rng.random::<f64>();
            }
            p
        })
        .collect()
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<SpatialDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if !spec.nested {
        rng.set_stream(spec.n as u64 + 1);
    }
    let dim = spec.kind.dim();
    let mut pts = uniform_points(&mut rng, spec.n, dim);
    if spec.kind == DatasetKind::CarvedDisks {
        pts.retain(|p| !in_carved_disk(p));
    }
    SpatialDataset::new(dim, pts, None)
}

/// Prediction targets drawn uniformly from the unit cube, independent of the data stream.
pub fn generate_targets(count: usize, dim: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TARGET_STREAM);
    uniform_points(&mut rng, count, dim)
}
