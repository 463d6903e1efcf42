//! Box-constrained Nelder–Mead minimization.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidInput(format!("invalid box [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lower..=self.upper).contains(&x)
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    fn to_box(self, y: f64) -> f64 {
        let s = 1.0 / (1.0 + (-y).exp());
        (self.lower + (self.upper - self.lower) * s).clamp(self.lower, self.upper)
    }

    fn from_box(self, x: f64) -> f64 {
        let s = ((x - self.lower) / (self.upper - self.lower)).clamp(1e-12, 1.0 - 1e-12);
        (s / (1.0 - s)).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimplexOptions {
    /// Stop once the simplex diameter (box coordinates, max norm) and the
    /// spread of objective values both fall below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial edge length in the unconstrained coordinates.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { tol: 1e-3, max_iter: 200, initial_step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `objective` over the box. Non-finite values (including `+inf`
/// for infeasible points) rank worst.
pub fn nelder_mead<F>(mut objective: F, start: &[f64], bounds: &[Bounds], opts: SimplexOptions) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let k = start.len();
    if bounds.len() != k || k == 0 {
        return Err(Error::LengthMismatch { expected: bounds.len(), actual: k });
    }
    if let Some(i) = (0..k).find(|&i| !bounds[i].contains(start[i])) {
        return Err(Error::InvalidInput(format!("start value {} outside its box", start[i])));
    }
    let to_box = |y: &[f64]| -> Vec<f64> { y.iter().zip(bounds).map(|(&v, b)| b.to_box(v)).collect() };
    let mut evaluations = 0;
    let mut eval = |y: &[f64]| -> f64 {
        evaluations += 1;
        let v = objective(&to_box(y));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let y0: Vec<f64> = start.iter().zip(bounds).map(|(&x, b)| b.from_box(x)).collect();
    let mut simplex = vec![y0.clone()];
    for i in 0..k {
        let mut y = y0.clone();
        y[i] += if y0[i] > 0.0 { -opts.initial_step } else { opts.initial_step };
        simplex.push(y);
    }
    let mut values: Vec<f64> = simplex.iter().map(|y| eval(y)).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut idx: Vec<usize> = (0..=k).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let boxed: Vec<Vec<f64>> = simplex.iter().map(|y| to_box(y)).collect();
        let diameter = boxed[1..]
            .iter()
            .flat_map(|x| x.iter().zip(&boxed[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = values[1..].iter().map(|v| (v - values[0]).abs()).fold(0.0, f64::max);
        if values[0].is_finite() && diameter <= opts.tol && spread <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..k).map(|d| simplex[..k].iter().map(|y| y[d]).sum::<f64>() / k as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..k).map(|d| centroid[d] + t * (simplex[k][d] - centroid[d])).collect() };

        let yr = along(-1.0);
        let fr = eval(&yr);
        if fr < values[0] {
            let ye = along(-2.0);
            let fe = eval(&ye);
            if fe < fr {
                simplex[k] = ye;
                values[k] = fe;
            } else {
                simplex[k] = yr;
                values[k] = fr;
            }
            continue;
        }
        if fr < values[k - 1] {
            simplex[k] = yr;
            values[k] = fr;
            continue;
        }
        let (yc, accept) = if fr < values[k] {
            let yc = along(-0.5);
            let fc = eval(&yc);
            (yc, (fc <= fr).then_some(fc))
        } else {
            let yc = along(0.5);
            let fc = eval(&yc);
            (yc, (fc < values[k]).then_some(fc))
        };
        if let Some(fc) = accept {
            simplex[k] = yc;
            values[k] = fc;
            continue;
        }
        for i in 1..=k {
            let y: Vec<f64> = (0..k).map(|d| simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d])).collect();
            values[i] = eval(&y);
            simplex[i] = y;
        }
    }
    Ok(SimplexResult {
        x: to_box(&simplex[0]),
        value: values[0],
        iterations,
        evaluations,
        converged,
    })
}
