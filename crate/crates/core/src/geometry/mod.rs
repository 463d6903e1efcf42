//! Observation locations and the adaptive cube decomposition.

mod io;
pub mod morton;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_binary, read_csv, read_dataset, write_binary, write_csv};
pub use tree::{Cube, CubeId, DecompositionTree, TreeStats};

/// Locations in `[0,1]^d` with optional observations.
///
/// Points are stored padded to three coordinates; unused axes are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDataset {
    dim: usize,
    locations: Vec<[f64; 3]>,
    values: Option<Vec<f64>>,
}

impl SpatialDataset {
    pub fn new(dim: usize, locations: Vec<[f64; 3]>, values: Option<Vec<f64>>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {dim}")));
        }
        if locations.is_empty() {
            return Err(Error::InvalidInput("dataset has no locations".into()));
        }
        for (index, p) in locations.iter().enumerate() {
            for (k, &value) in p.iter().enumerate() {
                let bad = if k < dim { !(0.0..=1.0).contains(&value) } else { value != 0.0 };
                if bad {
                    return Err(Error::OutOfDomain { index, value });
                }
            }
        }
        if let Some(v) = &values {
            if v.len() != locations.len() {
                return Err(Error::LengthMismatch {
                    expected: locations.len(),
                    actual: v.len(),
                });
            }
        }
        Ok(Self { dim, locations, values })
    }

    /// Builds a dataset from a flat `n*d` coordinate slice.
    pub fn from_flat(dim: usize, coords: &[f64], values: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        let locations = coords
            .chunks(dim)
            .map(|c| {
                let mut p = [0.0; 3];
                p[..dim].copy_from_slice(c);
                p
            })
            .collect();
        Self::new(dim, locations, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64; 3] {
        &self.locations[i]
    }

    pub fn locations(&self) -> &[[f64; 3]] {
        &self.locations
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: values.len(),
            });
        }
        self.values = Some(values);
        Ok(self)
    }

    /// First `n` points (and values).
    pub fn prefix(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::new(
            self.dim,
            self.locations[..n].to_vec(),
            self.values.as_ref().map(|v| v[..n].to_vec()),
        )
    }

    /// Rejects coincident locations.
    pub fn check_distinct(&self) -> Result<()> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let (pa, pb) = (&self.locations[a], &self.locations[b]);
            pa.partial_cmp(pb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for w in idx.windows(2) {
            if self.locations[w[0]] == self.locations[w[1]] {
                return Err(Error::DuplicateLocation {
                    first: w[0].min(w[1]),
                    second: w[0].max(w[1]),
                });
            }
        }
        Ok(())
    }
}

#[inline]
pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Tapering radius in cube dilations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TauRepr", into = "String")]
pub enum Tau {
    Finite(u32),
    Infinite,
}

impl Tau {
    pub fn covers(self, other: Tau) -> bool {
        match (self, other) {
            (Tau::Infinite, _) => true,
            (Tau::Finite(_), Tau::Infinite) => false,
            (Tau::Finite(a), Tau::Finite(b)) => a >= b,
        }
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau::Finite(t) => write!(f, "{t}"),
            Tau::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Tau {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" | "∞" => Ok(Tau::Infinite),
            other => other
                .parse::<u32>()
                .map(Tau::Finite)
                .map_err(|_| Error::Parse(format!("invalid tau '{other}'"))),
        }
    }
}

impl TryFrom<String> for Tau {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Accepts `1` as well as `"1"` or `"inf"` in config files.
#[derive(Deserialize)]
#[serde(untagged)]
enum TauRepr {
    Int(u32),
    Text(String),
}

impl TryFrom<TauRepr> for Tau {
    type Error = Error;

    fn try_from(r: TauRepr) -> Result<Self> {
        match r {
            TauRepr::Int(t) => Ok(Tau::Finite(t)),
            TauRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Tau> for String {
    fn from(t: Tau) -> String {
        t.to_string()
    }
}

pub fn build_tree(data: &SpatialDataset, leaf_threshold: usize) -> Result<DecompositionTree> {
    DecompositionTree::build(data, leaf_threshold)
}
