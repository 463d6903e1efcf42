//! Conjugate gradients on the symmetrically scaled system `D^-1 A D^-1`.

use serde::Serialize;

use crate::error::{Error, Result};

/// True residual is recomputed at this period.
pub const REPLACE_EVERY: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcgReport {
    pub iterations: usize,
    /// `||r_bar|| / ||b_bar||` of the scaled system after each iteration.
    pub preconditioned_residuals: Vec<f64>,
    /// `||A x - b|| / ||b||` recomputed from the returned `x`.
    pub relative_residual: f64,
    pub eps_pcg: f64,
    pub eps_target: f64,
    pub matvecs: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` by CG on `D^-1 A D^-1 (D x) = D^-1 b`.
///
/// Convergence is declared only on a recomputed residual `||A x - b|| / ||b||
/// <= eps_target`; a recomputation is triggered when the recurrence
/// estimate of that quantity, or the scaled residual against `eps_pcg`,
/// reaches its tolerance, and every [`REPLACE_EVERY`] iterations.
pub fn pcg<F>(
    matvec: F,
    scale: &[f64],
    b: &[f64],
    eps_pcg: f64,
    eps_target: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, PcgReport)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    pcg_observed(matvec, scale, b, eps_pcg, eps_target, max_iter, |_, _| {})
}

/// [`pcg`] that hands every iterate `(k, x_k)` to `observe`.
pub fn pcg_observed<F, O>(
    mut matvec: F,
    scale: &[f64],
    b: &[f64],
    eps_pcg: f64,
    eps_target: f64,
    max_iter: usize,
    mut observe: O,
) -> Result<(Vec<f64>, PcgReport)>
where
    F: FnMut(&[f64], &mut [f64]),
    O: FnMut(usize, &[f64]),
{
    let n = b.len();
    if scale.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: scale.len() });
    }
    if let Some(bad) = scale.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::Numerical(format!("preconditioner entry {bad} is not positive")));
    }
    let mut report = PcgReport {
        iterations: 0,
        preconditioned_residuals: Vec::new(),
        relative_residual: 0.0,
        eps_pcg,
        eps_target,
        matvecs: 0,
        converged: true,
    };
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], report));
    }
    let bbar: Vec<f64> = b.iter().zip(scale).map(|(bi, d)| bi / d).collect();
    let bbar_norm = norm(&bbar);

    let mut xbar = vec![0.0; n];
    let mut r = bbar.clone();
    let mut p = r.clone();
    let mut q = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut checked_at_pcg = false;
    let mut best: (f64, Vec<f64>) = (1.0, vec![0.0; n]);

    // Scaled operator product: q = D^-1 A D^-1 v.
    let mut apply = |v: &[f64], out: &mut [f64], tmp: &mut [f64], count: &mut usize| {
        for i in 0..n {
            tmp[i] = v[i] / scale[i];
        }
        matvec(tmp, out);
        *count += 1;
        for i in 0..n {
            out[i] /= scale[i];
        }
    };

    for it in 1..=max_iter {
        apply(&p, &mut q, &mut tmp, &mut report.matvecs);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Numerical(format!("operator is not positive definite (p'Ap = {pq:e})")));
        }
        let alpha = rr / pq;
        for i in 0..n {
            xbar[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        report.iterations = it;
        let x_it: Vec<f64> = xbar.iter().zip(scale).map(|(v, d)| v / d).collect();
        observe(it, &x_it);

        let rec_prec = norm(&r) / bbar_norm;
        let rec_unprec = r.iter().zip(scale).map(|(ri, d)| (ri * d).powi(2)).sum::<f64>().sqrt() / b_norm;
        let pcg_trigger = rec_prec <= eps_pcg && !checked_at_pcg;
        let check = rec_unprec <= eps_target || pcg_trigger || it % REPLACE_EVERY == 0;
        if check {
            checked_at_pcg |= pcg_trigger;
            // True residual in scaled form: D^-1 (b - A x).
            apply(&xbar, &mut ax, &mut tmp, &mut report.matvecs);
            for i in 0..n {
                r[i] = bbar[i] - ax[i];
            }
            let true_unprec = r.iter().zip(scale).map(|(ri, d)| (ri * d).powi(2)).sum::<f64>().sqrt() / b_norm;
            report.preconditioned_residuals.push(norm(&r) / bbar_norm);
            if true_unprec < best.0 {
                best = (true_unprec, xbar.clone());
            }
            if true_unprec <= eps_target {
                report.relative_residual = true_unprec;
                let x = xbar.iter().zip(scale).map(|(v, d)| v / d).collect();
                return Ok((x, report));
            }
        } else {
            report.preconditioned_residuals.push(rec_prec);
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    report.converged = false;
    report.relative_residual = best.0;
    let x = best.1.iter().zip(scale).map(|(v, d)| v / d).collect();
    Err(Error::NotConverged {
        iterations: report.iterations,
        residual: best.0,
        best: x,
        report: Box::new(report),
    })
}

/// Unpreconditioned conjugate gradients with the same stopping rule.
pub fn cg<F>(matvec: F, b: &[f64], eps_target: f64, max_iter: usize) -> Result<(Vec<f64>, PcgReport)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    pcg(matvec, &vec![1.0; b.len()], b, eps_target, eps_target, max_iter)
}
