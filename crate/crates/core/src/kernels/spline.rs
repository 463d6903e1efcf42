//! h-adaptive cubic Hermite interpolant of a radial covariance.

use super::KernelModel;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 5e-9;
pub const DEFAULT_R_MAX: f64 = 2.5;
pub const DEFAULT_NODE_CAP: usize = 2000;

const FD_SAMPLES: usize = 9;
const SEARCH_STEPS: usize = 8;

#[derive(Debug, Clone)]
pub struct SplineInterpolant {
    nodes: Vec<f64>,
    /// Cubic in the local coordinate `t in [0,1]` per element.
    coeffs: Vec<[f64; 4]>,
    tol: f64,
    r_max: f64,
    /// Exact value at the origin and below the first node.
    exact: Option<KernelModel>,
    at_zero: f64,
}

impl SplineInterpolant {
    pub fn build(model: &KernelModel, tol: f64, r_max: f64) -> Result<Self> {
        let m = *model;
        let start = if m.derivative_at_zero().is_finite() { 0.0 } else { r_max * 2f64.powi(-30) };
        let d0 = m.derivative_at_zero();
        let mut s = Self::from_fn(
            move |r| m.eval(r),
            move |r| if r == 0.0 { d0 } else { m.derivative(r) },
            start,
            tol,
            r_max,
            DEFAULT_NODE_CAP,
        )?;
        s.exact = Some(m);
        s.at_zero = m.eval(0.0);
        Ok(s)
    }

    /// Interpolates `f` on `[start, r_max]` given its exact derivative `df`.
    pub fn from_fn<F, D>(f: F, df: D, start: f64, tol: f64, r_max: f64, node_cap: usize) -> Result<Self>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64) -> f64,
    {
        if !(tol > 0.0) || !(r_max > start) || start < 0.0 {
            return Err(Error::InvalidInput(format!(
                "spline needs tol > 0 and 0 <= start < r_max (tol {tol}, start {start}, r_max {r_max})"
            )));
        }
        // March outward; each element is the longest one meeting the bound,
        // located by bisection on its length.
        let mut nodes = vec![start];
        let mut a = start;
        while a < r_max {
            if nodes.len() >= node_cap {
                let bound = element_bound(&f, a, r_max);
                return Err(Error::SplineNodeCap { cap: node_cap, left: a, right: r_max, bound });
            }
            let full = r_max - a;
            if element_bound(&f, a, r_max) < tol {
                nodes.push(r_max);
                break;
            }
            let (mut lo, mut hi) = (0.5 * full, full);
            loop {
                let bound = element_bound(&f, a, a + lo);
                if bound < tol {
                    break;
                }
                hi = lo;
                lo *= 0.5;
                if a + lo <= a {
                    return Err(Error::SplineNodeCap { cap: node_cap, left: a, right: a + hi, bound });
                }
            }
            for _ in 0..SEARCH_STEPS {
                let mid = 0.5 * (lo + hi);
                if element_bound(&f, a, a + mid) < tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            a += lo;
            if r_max - a <= 1e-12 * r_max {
                a = r_max;
            }
            nodes.push(a);
        }
        let values: Vec<f64> = nodes.iter().map(|&r| f(r)).collect();
        let slopes: Vec<f64> = nodes.iter().map(|&r| df(r)).collect();
        let coeffs = (0..nodes.len() - 1)
            .map(|e| {
                let h = nodes[e + 1] - nodes[e];
                let (y0, y1) = (values[e], values[e + 1]);
                let (d0, d1) = (h * slopes[e], h * slopes[e + 1]);
                [y0, d0, 3.0 * (y1 - y0) - 2.0 * d0 - d1, 2.0 * (y0 - y1) + d0 + d1]
            })
            .collect();
        Ok(Self {
            at_zero: f(start),
            nodes,
            coeffs,
            tol,
            r_max,
            exact: None,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.at_zero;
        }
        let first = self.nodes[0];
        if r > self.r_max || r < first {
            return match &self.exact {
                Some(m) => m.eval(r),
                None => f64::NAN,
            };
        }
        let e = (self.nodes.partition_point(|&x| x <= r).max(1) - 1).min(self.coeffs.len() - 1);
        let a = self.nodes[e];
        let t = (r - a) / (self.nodes[e + 1] - a);
        let c = &self.coeffs[e];
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }
}

/// `h^4 / 384 * max |f''''|` with the fourth derivative sampled by central
/// differences at points inside the element.
fn element_bound<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let len = b - a;
    let h = len / 16.0;
    let lo = a + 2.0 * h;
    let hi = b - 2.0 * h;
    let mut sup = 0.0f64;
    for s in 0..FD_SAMPLES {
        let x = lo + (hi - lo) * s as f64 / (FD_SAMPLES - 1) as f64;
        let d4 = (f(x - 2.0 * h) - 4.0 * f(x - h) + 6.0 * f(x) - 4.0 * f(x + h) + f(x + 2.0 * h)) / h.powi(4);
        if d4.is_nan() {
            return f64::INFINITY;
        }
        sup = sup.max(d4.abs());
    }
    len.powi(4) / 384.0 * sup
}
