//! Total-degree polynomial spaces in graded order.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::SpatialDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolynomialBasis {
    Monomial,
    #[default]
    Chebyshev,
}

/// Number of monomials of total degree at most `degree` in `dim` variables.
pub fn count(dim: usize, degree: u32) -> usize {
    let (n, k) = (dim as u64 + degree as u64, degree as u64);
    let mut c = 1u64;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c as usize
}

/// Exponents of total degree `<= degree`, ordered by degree then
/// lexicographically with the first axis varying slowest.
pub fn exponents(dim: usize, degree: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::with_capacity(count(dim, degree));
    for total in 0..=degree {
        match dim {
            1 => out.push([total, 0, 0]),
            2 => {
                for a in (0..=total).rev() {
                    out.push([a, total - a, 0]);
                }
            }
            _ => {
                for a in (0..=total).rev() {
                    for b in (0..=total - a).rev() {
                        out.push([a, b, total - a - b]);
                    }
                }
            }
        }
    }
    out
}

/// Per-axis one-dimensional values `P_0(u) .. P_degree(u)`.
fn axis_values(kind: PolynomialBasis, u: f64, degree: u32, out: &mut [f64]) {
    out[0] = 1.0;
    if degree == 0 {
        return;
    }
    out[1] = u;
    for k in 2..=degree as usize {
        out[k] = match kind {
            PolynomialBasis::Monomial => out[k - 1] * u,
            PolynomialBasis::Chebyshev => 2.0 * u * out[k - 1] - out[k - 2],
        };
    }
}

/// Evaluates a polynomial space at points mapped affinely from a box to `[-1,1]^d`.
#[derive(Debug, Clone)]
pub struct PolySpace {
    kind: PolynomialBasis,
    dim: usize,
    degree: u32,
    exps: Vec<[u32; 3]>,
}

impl PolySpace {
    pub fn new(kind: PolynomialBasis, dim: usize, degree: u32) -> Self {
        Self {
            kind,
            dim,
            degree,
            exps: exponents(dim, degree),
        }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[[u32; 3]] {
        &self.exps
    }

    /// Fills `out` with the space evaluated at local coordinates `u`.
    pub fn eval(&self, u: &[f64; 3], out: &mut [f64]) {
        let mut axis = [[0.0f64; 16]; 3];
        let deg = self.degree as usize;
        assert!(deg < 16, "polynomial degree {deg} too large");
        for k in 0..self.dim {
            axis_values(self.kind, u[k], self.degree, &mut axis[k][..=deg]);
        }
        for (slot, e) in out.iter_mut().zip(&self.exps) {
            let mut v = 1.0;
            for k in 0..self.dim {
                v *= axis[k][e[k] as usize];
            }
            *slot = v;
        }
    }

    /// Rows are points, mapped from the box `[lower, lower + side]^d`.
    pub fn local_matrix(&self, points: &[[f64; 3]], lower: &[f64; 3], side: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.len());
        let mut row = vec![0.0; self.len()];
        for (i, p) in points.iter().enumerate() {
            let mut u = [0.0; 3];
            for k in 0..self.dim {
                u[k] = 2.0 * (p[k] - lower[k]) / side - 1.0;
            }
            self.eval(&u, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// Global monomial trend vector `m(s)` of degree `<= f`.
pub fn trend_vector(dim: usize, f: u32, s: &[f64]) -> Vec<f64> {
    let space = PolySpace::new(PolynomialBasis::Monomial, dim, f);
    let mut u = [0.0; 3];
    u[..dim].copy_from_slice(&s[..dim]);
    let mut out = vec![0.0; space.len()];
    space.eval(&u, &mut out);
    out
}

/// Global monomial design matrix `M_f` (rows in dataset order).
pub fn design_matrix(data: &SpatialDataset, f: u32) -> DMatrix<f64> {
    let space = PolySpace::new(PolynomialBasis::Monomial, data.dim(), f);
    let mut m = DMatrix::zeros(data.len(), space.len());
    let mut row = vec![0.0; space.len()];
    for (i, p) in data.locations().iter().enumerate() {
        space.eval(p, &mut row);
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomials() {
        assert_eq!(count(2, 1), 3);
        assert_eq!(count(2, 3), 10);
        assert_eq!(count(2, 4), 15);
        assert_eq!(count(3, 3), 20);
        for d in 1..=3 {
            for f in 0..6 {
                assert_eq!(exponents(d, f).len(), count(d, f));
            }
        }
    }

    #[test]
    fn graded_order_nests() {
        let e4 = exponents(3, 4);
        let e2 = exponents(3, 2);
        assert_eq!(&e4[..e2.len()], e2.as_slice());
        assert!(e4.windows(2).all(|w| w[0].iter().sum::<u32>() <= w[1].iter().sum::<u32>()));
    }

    #[test]
    fn chebyshev_values() {
        let s = PolySpace::new(PolynomialBasis::Chebyshev, 2, 3);
        let mut out = vec![0.0; s.len()];
        s.eval(&[0.5, -0.25, 0.0], &mut out);
        // [1, x, y, x^2, xy, y^2, x^3, ...] with x^2 -> T2(x) = 2x^2-1
        assert_eq!(out[0], 1.0);
        assert_eq!(out[1], 0.5);
        assert_eq!(out[3], 2.0 * 0.25 - 1.0);
        assert_eq!(out[4], 0.5 * -0.25);
        assert_eq!(out[6], 4.0 * 0.125 - 3.0 * 0.5);
    }
}
