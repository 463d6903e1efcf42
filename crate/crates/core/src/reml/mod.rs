//! Multi-resolution restricted likelihood and its maximization.

mod simplex;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::MultiLevelBasis;
use crate::error::{Error, Result};
use crate::geometry::{DecompositionTree, Tau};
use crate::kernels::{Covariance, KernelModel, DEFAULT_R_MAX};
use crate::linalg::CholFactor;
use crate::mlcov::assemble;

pub use simplex::{nelder_mead, Bounds, SimplexOptions, SimplexResult};

/// Which contrast levels enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LevelChoice {
    /// Deepest contrast level only.
    Deepest,
    /// One level above the deepest.
    #[default]
    Auto,
    /// `k` levels above the deepest.
    Below(u32),
    Fixed(i32),
}

impl LevelChoice {
    pub fn resolve(self, basis: &MultiLevelBasis) -> i32 {
        let t = basis.deepest_contrast_level().map_or(-1, |t| t as i32);
        match self {
            LevelChoice::Deepest => t,
            LevelChoice::Auto => (t - 1).max(-1),
            LevelChoice::Below(k) => (t - k as i32).max(-1),
            LevelChoice::Fixed(i) => i,
        }
    }
}

impl fmt::Display for LevelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelChoice::Deepest => write!(f, "t"),
            LevelChoice::Auto => write!(f, "auto"),
            LevelChoice::Below(k) => write!(f, "t-{k}"),
            LevelChoice::Fixed(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for LevelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "t" => Ok(LevelChoice::Deepest),
            "auto" | "t-1" => Ok(LevelChoice::Auto),
            other => {
                let bad = || Error::Parse(format!("bad level '{other}', expected an integer, 't', 't-k' or 'auto'"));
                match other.strip_prefix("t-") {
                    Some(k) => match k.parse::<u32>().map_err(|_| bad())? {
                        0 => Ok(LevelChoice::Deepest),
                        1 => Ok(LevelChoice::Auto),
                        k => Ok(LevelChoice::Below(k)),
                    },
                    None => other.parse::<i32>().map(LevelChoice::Fixed).map_err(|_| bad()),
                }
            }
        }
    }
}

impl TryFrom<String> for LevelChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LevelChoice> for String {
    fn from(l: LevelChoice) -> String {
        l.to_string()
    }
}

/// Likelihood value with its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoglikEval {
    pub value: f64,
    pub n_tilde: usize,
    pub log_det: f64,
    pub quadratic: f64,
    pub nnz: usize,
    pub factor_nnz: usize,
    pub assembly_secs: f64,
    pub factor_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RemlProblem<'a> {
    tree: &'a DecompositionTree,
    basis: &'a MultiLevelBasis,
    model: KernelModel,
    tau: Tau,
    min_level: i32,
    bounds: Vec<Bounds>,
    options: SimplexOptions,
    /// Spline tolerance; `None` evaluates the kernel directly.
    spline_tol: Option<f64>,
    contrasts: Vec<f64>,
    data_norm: f64,
}

impl<'a> RemlProblem<'a> {
    /// `model` fixes the kernel family; its parameters are only a template.
    pub fn new(
        tree: &'a DecompositionTree,
        basis: &'a MultiLevelBasis,
        values: &[f64],
        model: KernelModel,
        tau: Tau,
        level: LevelChoice,
        bounds: Vec<Bounds>,
    ) -> Result<Self> {
        let min_level = level.resolve(basis);
        let t = basis.deepest_contrast_level().map_or(-1, |t| t as i32);
        if min_level < -1 || min_level > t {
            return Err(Error::InvalidInput(format!("min level {min_level} outside -1..={t}")));
        }
        if bounds.len() != model.theta().len() {
            return Err(Error::LengthMismatch { expected: model.theta().len(), actual: bounds.len() });
        }
        if bounds.iter().any(|b| b.lower <= 0.0) {
            return Err(Error::InvalidInput("parameter boxes must be positive".into()));
        }
        let rows = basis.rows_down_to(min_level);
        let mut contrasts = basis.apply_w(values)?;
        contrasts.truncate(rows);
        let data_norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self {
            tree,
            basis,
            model,
            tau,
            min_level,
            bounds,
            options: SimplexOptions::default(),
            spline_tol: None,
            contrasts,
            data_norm,
        })
    }

    pub fn with_options(mut self, options: SimplexOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_spline(mut self, tol: Option<f64>) -> Self {
        self.spline_tol = tol;
        self
    }

    pub fn min_level(&self) -> i32 {
        self.min_level
    }

    pub fn tau(&self) -> Tau {
        self.tau
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn options(&self) -> SimplexOptions {
        self.options
    }

    /// `n~`, the number of contrasts in the likelihood.
    pub fn n_tilde(&self) -> usize {
        self.contrasts.len()
    }

    /// `Z~^i_W`.
    pub fn contrasts(&self) -> &[f64] {
        &self.contrasts
    }

    /// True when the data carry no information beyond the trend.
    pub fn is_degenerate(&self) -> bool {
        let norm = self.contrasts.iter().map(|v| v * v).sum::<f64>().sqrt();
        norm <= 1e-12 * self.data_norm.max(f64::MIN_POSITIVE)
    }

    pub fn covariance(&self, theta: &[f64]) -> Result<Covariance> {
        let model = self.model.with_theta(theta)?;
        match self.spline_tol {
            Some(tol) => Covariance::with_spline(model, tol, DEFAULT_R_MAX),
            None => Ok(Covariance::exact(model)),
        }
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<LoglikEval> {
        let cov = self.covariance(theta)?;
        let t0 = Instant::now();
        let c = assemble(self.basis, self.tree, &cov, self.tau, self.min_level)?;
        let assembly_secs = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let factor = CholFactor::analyze_and_factor(c.matrix()).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot } => Error::TaperNotPositiveDefinite { pivot, tau: self.tau.to_string(), min_level: self.min_level },
            other => other,
        })?;
        let log_det = factor.log_det();
        let solved = factor.solve(&self.contrasts)?;
        let factor_secs = t0.elapsed().as_secs_f64();
        let quadratic: f64 = solved.iter().zip(&self.contrasts).map(|(a, b)| a * b).sum();
        let n_tilde = self.n_tilde();
        let value = -0.5 * n_tilde as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * quadratic;
        Ok(LoglikEval {
            value,
            n_tilde,
            log_det,
            quadratic,
            nnz: c.matrix().nnz(),
            factor_nnz: factor.nnz(),
            assembly_secs,
            factor_secs,
        })
    }

    /// `l~^i_W(theta)`.
    pub fn restricted_loglik(&self, theta: &[f64]) -> Result<f64> {
        self.evaluate(theta).map(|e| e.value)
    }

    pub fn start(&self) -> Vec<f64> {
        self.bounds.iter().map(Bounds::center).collect()
    }

    /// Maximizes the likelihood from the box center.
    pub fn estimate(&self) -> Result<RemlResult> {
        self.estimate_from(&self.start())
    }

    pub fn estimate_from(&self, start: &[f64]) -> Result<RemlResult> {
        let mut trace = Vec::new();
        let mut failure = None;
        let out = nelder_mead(
            |theta| match self.evaluate(theta) {
                Ok(e) => {
                    trace.push(TraceEntry {
                        theta: theta.to_vec(),
                        loglik: e.value,
                        positive_definite: true,
                        assembly_secs: e.assembly_secs,
                        factor_secs: e.factor_secs,
                        nnz: e.nnz,
                    });
                    -e.value
                }
                Err(Error::TaperNotPositiveDefinite { .. }) => {
                    trace.push(TraceEntry {
                        theta: theta.to_vec(),
                        loglik: f64::NEG_INFINITY,
                        positive_definite: false,
                        assembly_secs: 0.0,
                        factor_secs: 0.0,
                        nnz: 0,
                    });
                    f64::INFINITY
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            start,
            &self.bounds,
            self.options,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        if !out.value.is_finite() {
            let (pivot, tau, min_level) = (0, self.tau.to_string(), self.min_level);
            return Err(Error::TaperNotPositiveDefinite { pivot, tau, min_level });
        }
        Ok(RemlResult {
            theta: out.x,
            loglik: -out.value,
            iterations: out.iterations,
            evaluations: out.evaluations,
            converged: out.converged,
            degenerate: self.is_degenerate(),
            non_pd_evaluations: trace.iter().filter(|t| !t.positive_definite).count(),
            n_tilde: self.n_tilde(),
            min_level: self.min_level,
            trace,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub positive_definite: bool,
    pub assembly_secs: f64,
    pub factor_secs: f64,
    pub nnz: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemlResult {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Contrasts vanish, so the likelihood carries no information.
    pub degenerate: bool,
    pub non_pd_evaluations: usize,
    pub n_tilde: usize,
    pub min_level: i32,
    pub trace: Vec<TraceEntry>,
}
