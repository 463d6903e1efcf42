//! Kriging through the decoupled contrast system `C_W gamma_W = Z_W`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, trend_vector, MultiLevelBasis};
use crate::error::{Error, Result};
use crate::geometry::{distance, SpatialDataset};
use crate::kernels::Covariance;
use crate::linalg::{pcg, DenseCholesky, PcgReport};
use crate::mlcov::ExactOperator;

/// Diagonal scaling used by PCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    /// `D_W^-1 C_W D_W^-1` with `D_W = diag(C_W)`.
    Diagonal,
    /// Symmetric Jacobi, `D_W^-1/2 C_W D_W^-1/2`.
    #[default]
    Jacobi,
    None,
}

impl fmt::Display for Preconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preconditioner::Diagonal => "diagonal",
            Preconditioner::Jacobi => "jacobi",
            Preconditioner::None => "none",
        })
    }
}

impl FromStr for Preconditioner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Preconditioner::Diagonal),
            "jacobi" => Ok(Preconditioner::Jacobi),
            "none" => Ok(Preconditioner::None),
            other => Err(Error::Parse(format!("unknown preconditioner '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrigingOptions {
    /// Target for `||C_W x - b|| / ||b||`.
    pub eps: f64,
    /// Tolerance on the scaled residual; defaults to `eps`.
    pub eps_pcg: Option<f64>,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for KrigingOptions {
    fn default() -> Self {
        Self { eps: 1e-5, eps_pcg: None, max_iter: 10_000, preconditioner: Preconditioner::Jacobi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrigingSolution {
    /// `gamma_hat = W^T gamma_W`, dataset order.
    pub gamma: Vec<f64>,
    pub gamma_w: Vec<f64>,
    pub beta: Vec<f64>,
    pub report: PcgReport,
    pub theta: Vec<f64>,
}

/// Quantities shared by every MSE evaluation at fixed `theta`.
#[derive(Debug, Clone)]
pub struct MseWorkspace {
    /// `S_W - a_W^T C_W^-1 a_W`, the inverse of `S~_W`.
    schur: DMatrix<f64>,
    /// `S~_W`.
    pub s_tilde: DMatrix<f64>,
    /// `C_W^-1 a_W`, `(n - p) x p`.
    cw_inv_a: DMatrix<f64>,
    /// `L M_f`.
    pub lm: DMatrix<f64>,
    pub reports: Vec<PcgReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseValue {
    pub value: f64,
    /// Value before clamping tiny negatives to zero.
    pub raw: f64,
    pub clamped: bool,
    /// `c^T C^-1 c`.
    pub explained: f64,
    /// `u^T (M^T C^-1 M)^-1 u`.
    pub trend: f64,
    pub iterations: usize,
}

/// Negative MSE values above this are rounding noise.
pub const MSE_NEGATIVE_SLACK: f64 = 1e-6;

pub struct KrigingSystem<'a> {
    basis: &'a MultiLevelBasis,
    data: &'a SpatialDataset,
    cov: Covariance,
    op: ExactOperator<'a>,
    scale: Vec<f64>,
    design: DMatrix<f64>,
    options: KrigingOptions,
}

impl<'a> KrigingSystem<'a> {
    pub fn new(basis: &'a MultiLevelBasis, data: &'a SpatialDataset, cov: &Covariance, options: KrigingOptions) -> Result<Self> {
        if data.len() != basis.n() {
            return Err(Error::LengthMismatch { expected: basis.n(), actual: data.len() });
        }
        if !(options.eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", options.eps)));
        }
        let op = ExactOperator::new(basis, cov);
        let diag = op.diag_preconditioner()?;
        let scale = match options.preconditioner {
            Preconditioner::Diagonal => diag,
            Preconditioner::Jacobi => diag.iter().map(|d| d.sqrt()).collect(),
            Preconditioner::None => vec![1.0; diag.len()],
        };
        Ok(Self {
            basis,
            data,
            cov: cov.clone(),
            op,
            scale,
            design: design_matrix(data, basis.spec().f),
            options,
        })
    }

    pub fn operator(&self) -> &ExactOperator<'a> {
        &self.op
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// `C_W x = b` by PCG.
    pub fn solve_contrast(&self, b: &[f64], eps: f64) -> Result<(Vec<f64>, PcgReport)> {
        let eps_pcg = self.options.eps_pcg.unwrap_or(eps);
        pcg(|x, y| self.op.apply_into(x, y), &self.scale, b, eps_pcg, eps, self.options.max_iter)
    }

    pub fn solve(&self, z: &[f64]) -> Result<KrigingSolution> {
        let mut zw = self.basis.apply_w(z)?;
        let z_norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if zw.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-12 * z_norm {
            // Data lie in the trend space up to rounding.
            zw.iter_mut().for_each(|v| *v = 0.0);
        }
        let (gamma_w, report) = self.solve_contrast(&zw, self.options.eps)?;
        let gamma = self.basis.apply_wt(&gamma_w)?;
        let c_gamma = self.op.apply_c(&gamma)?;
        let resid: Vec<f64> = z.iter().zip(&c_gamma).map(|(a, b)| a - b).collect();
        let beta = least_squares(&self.design, &resid)?;
        Ok(KrigingSolution { gamma, gamma_w, beta, report, theta: self.cov.model().theta() })
    }

    /// `c(s0)` in dataset order.
    pub fn cross_covariance(&self, s0: &[f64]) -> Result<Vec<f64>> {
        let target = pad(s0, self.data.dim())?;
        Ok(self.data.locations().iter().map(|p| self.cov.eval(distance(p, &target))).collect())
    }

    pub fn trend(&self, s0: &[f64]) -> Result<Vec<f64>> {
        let target = pad(s0, self.data.dim())?;
        Ok(trend_vector(self.data.dim(), self.basis.spec().f, &target))
    }

    /// `m(s0)^T beta + c^T gamma` for a given cross-covariance vector.
    pub fn predict_with(&self, sol: &KrigingSolution, c: &[f64], m0: &[f64]) -> f64 {
        let trend: f64 = m0.iter().zip(&sol.beta).map(|(a, b)| a * b).sum();
        trend + c.iter().zip(&sol.gamma).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, sol: &KrigingSolution, s0: &[f64]) -> Result<f64> {
        Ok(self.predict_with(sol, &self.cross_covariance(s0)?, &self.trend(s0)?))
    }

    pub fn predict_many(&self, sol: &KrigingSolution, targets: &[[f64; 3]]) -> Result<Vec<f64>> {
        let d = self.data.dim();
        targets.iter().map(|t| self.predict(sol, &t[..d])).collect()
    }

    pub fn mse_workspace(&self) -> Result<MseWorkspace> {
        let basis = self.basis;
        let p = basis.p();
        let m = basis.num_contrasts();
        let n = basis.n();
        let eps = self.options.eps / 10.0;
        let mut s_w = DMatrix::zeros(p, p);
        let mut a_w = DMatrix::zeros(m, p);
        let mut y = vec![0.0; n];
        for j in 0..p {
            let lt = basis.l_vectors().column(j);
            self.op.apply_c_tree(lt.as_slice(), &mut y);
            let ly = basis.apply_l_tree(&y);
            for i in 0..p {
                s_w[(i, j)] = ly[i];
            }
            let wy = basis.apply_w_tree(&y);
            a_w.column_mut(j).copy_from_slice(&wy);
        }
        let mut cw_inv_a = DMatrix::zeros(m, p);
        let mut reports = Vec::with_capacity(p);
        for j in 0..p {
            if m == 0 {
                break;
            }
            let (x, report) = self.solve_contrast(a_w.column(j).as_slice(), eps)?;
            cw_inv_a.column_mut(j).copy_from_slice(&x);
            reports.push(report);
        }
        let mut schur = &s_w - a_w.transpose() * &cw_inv_a;
        schur = (&schur + schur.transpose()) * 0.5;
        let chol = DenseCholesky::new(&schur).map_err(|_| Error::Numerical("S_W - a_W^T C_W^-1 a_W is not positive definite".into()))?;
        let mut s_tilde = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            s_tilde.column_mut(j).copy_from_slice(&chol.solve(&e));
        }
        s_tilde = (&s_tilde + s_tilde.transpose()) * 0.5;
        let mut lm = DMatrix::zeros(p, p);
        for j in 0..p {
            let col: Vec<f64> = self.design.column(j).iter().copied().collect();
            lm.column_mut(j).copy_from_slice(&basis.apply_l(&col)?);
        }
        Ok(MseWorkspace { schur, s_tilde, cw_inv_a, lm, reports })
    }

    /// `M_f^T C^-1 M_f = (L M_f)^T S~_W (L M_f)`.
    pub fn gls_information(&self, ws: &MseWorkspace) -> DMatrix<f64> {
        ws.lm.transpose() * &ws.s_tilde * &ws.lm
    }

    pub fn mse(&self, ws: &MseWorkspace, s0: &[f64]) -> Result<MseValue> {
        self.mse_with(ws, &self.cross_covariance(s0)?, &self.trend(s0)?)
    }

    /// MSE for a given cross-covariance vector `c` and trend row `m0`.
    pub fn mse_with(&self, ws: &MseWorkspace, c: &[f64], m0: &[f64]) -> Result<MseValue> {
        let cw = self.basis.apply_w(c)?;
        let cl = DVector::from_vec(self.basis.apply_l(c)?);
        let (y, report) = if cw.iter().all(|&v| v == 0.0) {
            (vec![0.0; cw.len()], None)
        } else {
            let (y, r) = self.solve_contrast(&cw, self.options.eps / 10.0)?;
            (y, Some(r))
        };
        let cw_v = DVector::from_column_slice(&cw);
        // r = L c - a_W^T C_W^-1 W c
        let r = &cl - ws.cw_inv_a.transpose() * &cw_v;
        let s_r = &ws.s_tilde * &r;
        let explained = cw_v.dot(&DVector::from_vec(y)) + r.dot(&s_r);
        // u = M^T C^-1 c - m0 = (LM)^T S~ r - m0; with v = (LM)^-T u,
        // u^T (M^T C^-1 M)^-1 u = v^T (S~)^-1 v.
        let m0 = DVector::from_column_slice(m0);
        let lm_t_inv_m0 = ws
            .lm
            .transpose()
            .lu()
            .solve(&m0)
            .ok_or_else(|| Error::Numerical("L M_f is singular".into()))?;
        let v = &s_r - lm_t_inv_m0;
        let trend = v.dot(&(&ws.schur * &v));
        let raw = self.cov.model().variance_at_zero() + trend - explained;
        if raw < -MSE_NEGATIVE_SLACK {
            return Err(Error::Numerical(format!("negative MSE {raw:e}")));
        }
        Ok(MseValue {
            value: raw.max(0.0),
            raw,
            clamped: raw < 0.0,
            explained,
            trend,
            iterations: report.map_or(0, |r| r.iterations),
        })
    }
}

fn pad(s0: &[f64], dim: usize) -> Result<[f64; 3]> {
    if s0.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, actual: s0.len() });
    }
    if s0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("target location is not finite".into()));
    }
    let mut t = [0.0; 3];
    t[..dim].copy_from_slice(s0);
    Ok(t)
}

/// `argmin ||M b - r||` via QR; equals `(M^T M)^-1 M^T r` for full-rank `M`.
fn least_squares(m: &DMatrix<f64>, r: &[f64]) -> Result<Vec<f64>> {
    let qr = m.clone().qr();
    let qtr = qr.q().transpose() * DVector::from_column_slice(r);
    qr.r()
        .solve_upper_triangular(&qtr)
        .map(|b| b.as_slice().to_vec())
        .ok_or_else(|| Error::Numerical("design matrix is rank deficient".into()))
}

/// One-shot solve of the kriging system for `z`.
pub fn solve_kriging_system(basis: &MultiLevelBasis, data: &SpatialDataset, cov: &Covariance, z: &[f64], eps: f64) -> Result<KrigingSolution> {
    let opts = KrigingOptions { eps, ..Default::default() };
    KrigingSystem::new(basis, data, cov, opts)?.solve(z)
}
