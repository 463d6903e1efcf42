//! Decay bound for `psi_a^T C psi_b` between two well-separated cubes.

use serde::Serialize;

use crate::basis::DesignSpec;
use crate::error::{Error, Result};
use crate::geometry::{DecompositionTree, Tau};
use crate::kernels::KernelModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma1Bound {
    pub level_a: u32,
    pub code_a: u64,
    pub level_b: u32,
    pub code_b: u64,
    pub r_a: f64,
    pub r_b: f64,
    /// Derivative order `f_tilde + 1` in each variable.
    pub order: u32,
    pub value: f64,
}

/// Bound for the cube pair `(i, l)`, `(j, k)`; both balls must be disjoint.
pub fn lemma1_bound(tree: &DecompositionTree, model: &KernelModel, spec: &DesignSpec, i: u32, l: u64, j: u32, k: u64) -> Result<Lemma1Bound> {
    let find = |level: u32, code: u64| {
        tree.find(level, code).ok_or(Error::UnknownCube { level: level as i32, code })
    };
    let ca = tree.cube(find(i, l)?);
    let cb = tree.cube(find(j, k)?);
    let dim = tree.dim();
    let radius = |side: f64| 0.5 * side * (dim as f64).sqrt();
    let (r_a, r_b) = (radius(ca.side_length), radius(cb.side_length));
    let order = spec.f_tilde + 1;
    let value = ball_bound(model, dim, &ca.center(dim), r_a, &cb.center(dim), r_b, order)?;
    Ok(Lemma1Bound { level_a: i, code_a: l, level_b: j, code_b: k, r_a, r_b, order, value })
}

/// `sum_{|alpha|=q} sum_{|beta|=q} r_a^alpha/alpha! r_b^beta/beta! sup |D^alpha_x D^beta_y phi|`
/// over the balls `B(a, r_a)` and `B(b, r_b)`.
pub fn ball_bound(model: &KernelModel, dim: usize, a: &[f64; 3], r_a: f64, b: &[f64; 3], r_b: f64, q: u32) -> Result<f64> {
    let mut c = [0.0; 3];
    for d in 0..dim {
        c[d] = a[d] - b[d];
    }
    let dist = norm(&c);
    if dist <= r_a + r_b {
        return Err(Error::OverlappingBalls { distance: dist, r_a, r_b });
    }
    let alphas = multi_indices(dim, q);
    let samples = ball_samples(dim, &c, r_a + r_b);
    // x and y enter only through x - y, which ranges over B(a - b, r_a + r_b).
    let gap = dist - r_a - r_b;
    let h = (gap / (2.0 * q as f64)).min(model.rho() / 8.0);

    let mut sup = std::collections::HashMap::new();
    let mut total = 0.0;
    for alpha in &alphas {
        for beta in &alphas {
            let mut gamma = [0u32; 3];
            for d in 0..dim {
                gamma[d] = alpha[d] + beta[d];
            }
            let s = *sup
                .entry(gamma)
                .or_insert_with(|| samples.iter().map(|z| derivative(model, dim, z, &gamma, h).abs()).fold(0.0, f64::max));
            let wa = r_a.powi(q as i32) / factorial(alpha, dim);
            let wb = r_b.powi(q as i32) / factorial(beta, dim);
            total += wa * wb * s;
        }
    }
    Ok(total)
}

/// Cube pairs at levels `>= 0` whose enclosing balls are disjoint and which
/// the `tau` criterion drops.
pub fn separated_pairs(tree: &DecompositionTree, tau: Tau) -> Vec<(usize, usize)> {
    let dim = tree.dim();
    let cubes = tree.cubes();
    let mut out = Vec::new();
    for a in 0..cubes.len() {
        for b in a + 1..cubes.len() {
            if tree.cubes_interact(a, b, tau) {
                continue;
            }
            let (ca, cb) = (&cubes[a], &cubes[b]);
            let ra = 0.5 * ca.side_length * (dim as f64).sqrt();
            let rb = 0.5 * cb.side_length * (dim as f64).sqrt();
            let (pa, pb) = (ca.center(dim), cb.center(dim));
            let mut c = [0.0; 3];
            for d in 0..dim {
                c[d] = pa[d] - pb[d];
            }
            if norm(&c) > ra + rb {
                out.push((a, b));
            }
        }
    }
    out
}

fn norm(z: &[f64; 3]) -> f64 {
    (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt()
}

fn factorial(alpha: &[u32; 3], dim: usize) -> f64 {
    alpha[..dim].iter().map(|&m| (1..=m).map(f64::from).product::<f64>()).product()
}

fn multi_indices(dim: usize, q: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    match dim {
        1 => out.push([q, 0, 0]),
        2 => (0..=q).for_each(|a| out.push([a, q - a, 0])),
        _ => {
            for a in 0..=q {
                for b in 0..=q - a {
                    out.push([a, b, q - a - b]);
                }
            }
        }
    }
    out
}

/// Grid of the ball plus shell points along axes, diagonals and the center line.
fn ball_samples(dim: usize, center: &[f64; 3], radius: f64) -> Vec<[f64; 3]> {
    let per_axis: i32 = match dim {
        1 => 33,
        2 => 13,
        _ => 7,
    };
    let half = (per_axis - 1) / 2;
    let mut out = Vec::new();
    let mut idx = [0i32; 3];
    let total = (per_axis as usize).pow(dim as u32);
    for flat in 0..total {
        let mut rest = flat;
        for d in 0..dim {
            idx[d] = (rest % per_axis as usize) as i32 - half;
            rest /= per_axis as usize;
        }
        let mut u = [0.0; 3];
        for d in 0..dim {
            u[d] = idx[d] as f64 / half as f64;
        }
        if norm(&u) <= 1.0 {
            out.push(u);
        }
    }
    let mut dirs: Vec<[f64; 3]> = Vec::new();
    for d in 0..dim {
        let mut e = [0.0; 3];
        e[d] = 1.0;
        dirs.push(e);
        e[d] = -1.0;
        dirs.push(e);
    }
    if dim > 1 {
        for signs in 0..(1u32 << dim) {
            let mut e = [0.0; 3];
            for d in 0..dim {
                e[d] = if signs >> d & 1 == 1 { -1.0 } else { 1.0 } / (dim as f64).sqrt();
            }
            dirs.push(e);
        }
    }
    let cn = norm(center);
    let mut toward = [0.0; 3];
    for d in 0..dim {
        toward[d] = -center[d] / cn;
    }
    dirs.push(toward);
    dirs.push([-toward[0], -toward[1], -toward[2]]);
    out.extend(dirs);
    out.iter()
        .map(|u| {
            let mut z = [0.0; 3];
            for d in 0..dim {
                z[d] = center[d] + radius * u[d];
            }
            z
        })
        .collect()
}

/// `D^gamma` of `z -> phi(|z|)` by nested central differences with step `h`.
fn derivative(model: &KernelModel, dim: usize, z: &[f64; 3], gamma: &[u32; 3], h: f64) -> f64 {
    let stencils: Vec<Vec<(f64, f64)>> = (0..dim)
        .map(|d| {
            let m = gamma[d];
            let scale = h.powi(m as i32);
            (0..=m)
                .map(|j| {
                    let offset = (m as f64 / 2.0 - j as f64) * h;
                    let weight = binomial(m, j) * if j % 2 == 0 { 1.0 } else { -1.0 } / scale;
                    (offset, weight)
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    let mut idx = [0usize; 3];
    loop {
        let mut p = *z;
        let mut w = 1.0;
        for d in 0..dim {
            let (off, wt) = stencils[d][idx[d]];
            p[d] += off;
            w *= wt;
        }
        total += w * model.eval(norm(&p));
        let mut d = 0;
        loop {
            if d == dim {
                return total;
            }
            idx[d] += 1;
            if idx[d] < stencils[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn binomial(m: u32, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * f64::from(m - i) / f64::from(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 3).len(), 1);
        assert_eq!(multi_indices(2, 3).len(), 4);
        assert_eq!(multi_indices(3, 3).len(), 10);
    }

    #[test]
    fn finite_difference_matches_gaussian_second_derivative() {
        let model = KernelModel::gaussian(0.3).unwrap();
        let z = [0.7, 0.0, 0.0];
        let got = derivative(&model, 1, &z, &[2, 0, 0], 0.01);
        let x: f64 = 0.7;
        let s2 = 0.09;
        let want = (x * x / (s2 * s2) - 1.0 / s2) * (-x * x / (2.0 * s2)).exp();
        assert!((got - want).abs() < 1e-4 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn overlapping_balls_rejected() {
        let model = KernelModel::gaussian(0.3).unwrap();
        let r = ball_bound(&model, 2, &[0.0; 3], 0.5, &[0.6, 0.0, 0.0], 0.5, 2);
        assert!(matches!(r, Err(Error::OverlappingBalls { .. })));
    }
}
