//! Isotropic covariance functions and a spline accelerator.

pub mod bessel;
mod spline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{distance, SpatialDataset};

pub use spline::{SplineInterpolant, DEFAULT_NODE_CAP, DEFAULT_R_MAX, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Matern,
    Exponential,
    Gaussian,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Matern => "matern",
            KernelFamily::Exponential => "exponential",
            KernelFamily::Gaussian => "gaussian",
        })
    }
}

/// Serialized kernel description: `{ family, nu, rho }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default)]
    pub nu: Option<f64>,
    pub rho: f64,
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `matern:NU,RHO`, `exponential:RHO` or `gaussian:RHO`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("kernel '{s}' must look like family:params")))?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|e| Error::Parse(format!("kernel '{s}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let spec = match (name.trim(), nums.as_slice()) {
            ("matern", [nu, rho]) => KernelSpec { family: KernelFamily::Matern, nu: Some(*nu), rho: *rho },
            ("exponential", [rho]) => KernelSpec { family: KernelFamily::Exponential, nu: None, rho: *rho },
            ("gaussian", [rho]) => KernelSpec { family: KernelFamily::Gaussian, nu: None, rho: *rho },
            _ => return Err(Error::Parse(format!("unrecognized kernel '{s}'"))),
        };
        KernelModel::from_spec(spec)?;
        Ok(spec)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.nu {
            Some(nu) if self.family == KernelFamily::Matern => write!(f, "matern:{nu},{}", self.rho),
            _ => write!(f, "{}:{}", self.family, self.rho),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    Exponential,
    MaternThreeHalves,
    MaternFiveHalves,
    /// General Matérn with `log(2^{1-nu} / Gamma(nu))` precomputed.
    Matern { log_norm: f64 },
    Gaussian,
}

/// Unit-variance isotropic covariance `phi(r; theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelModel {
    family: KernelFamily,
    nu: f64,
    rho: f64,
    /// Multiplier taking `r` to the argument of the closed form.
    scale: f64,
    form: Form,
}

impl KernelModel {
    pub fn matern(nu: f64, rho: f64) -> Result<Self> {
        check_positive("nu", nu)?;
        check_positive("rho", rho)?;
        let scale = (2.0 * nu).sqrt() / rho;
        let form = if nu == 0.5 {
            Form::Exponential
        } else if nu == 1.5 {
            Form::MaternThreeHalves
        } else if nu == 2.5 {
            Form::MaternFiveHalves
        } else {
            Form::Matern {
                log_norm: (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
            }
        };
        Ok(Self { family: KernelFamily::Matern, nu, rho, scale, form })
    }

    /// `exp(-r / rho)`.
    pub fn exponential(rho: f64) -> Result<Self> {
        check_positive("rho", rho)?;
        Ok(Self {
            family: KernelFamily::Exponential,
            nu: 0.5,
            rho,
            scale: 1.0 / rho,
            form: Form::Exponential,
        })
    }

    /// `exp(-r^2 / (2 rho^2))`.
    pub fn gaussian(rho: f64) -> Result<Self> {
        check_positive("rho", rho)?;
        Ok(Self {
            family: KernelFamily::Gaussian,
            nu: f64::INFINITY,
            rho,
            scale: 1.0 / rho,
            form: Form::Gaussian,
        })
    }

    pub fn from_spec(spec: KernelSpec) -> Result<Self> {
        match spec.family {
            KernelFamily::Matern => {
                let nu = spec
                    .nu
                    .ok_or_else(|| Error::InvalidKernel("matern kernel requires nu".into()))?;
                Self::matern(nu, spec.rho)
            }
            KernelFamily::Exponential => Self::exponential(spec.rho),
            KernelFamily::Gaussian => Self::gaussian(spec.rho),
        }
    }

    pub fn spec(&self) -> KernelSpec {
        KernelSpec {
            family: self.family,
            nu: (self.family == KernelFamily::Matern).then_some(self.nu),
            rho: self.rho,
        }
    }

    /// Same family with a new parameter vector (`[nu, rho]` for Matérn, `[rho]` otherwise).
    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        match (self.family, theta) {
            (KernelFamily::Matern, [nu, rho]) => Self::matern(*nu, *rho),
            (KernelFamily::Exponential, [rho]) => Self::exponential(*rho),
            (KernelFamily::Gaussian, [rho]) => Self::gaussian(*rho),
            _ => Err(Error::InvalidKernel(format!(
                "{} kernel cannot take {} parameters",
                self.family,
                theta.len()
            ))),
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        match self.family {
            KernelFamily::Matern => vec![self.nu, self.rho],
            _ => vec![self.rho],
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn variance_at_zero(&self) -> f64 {
        1.0
    }

    /// Covariance at distance `r >= 0`.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let z = self.scale * r;
        match self.form {
            Form::Exponential => (-z).exp(),
            Form::MaternThreeHalves => (1.0 + z) * (-z).exp(),
            Form::MaternFiveHalves => (1.0 + z + z * z / 3.0) * (-z).exp(),
            Form::Gaussian => (-0.5 * z * z).exp(),
            Form::Matern { log_norm } => {
                if z == 0.0 {
                    return 1.0;
                }
                let k = bessel::bessel_k_scaled(self.nu, z);
                (log_norm + self.nu * z.ln() + k.ln() - z).exp()
            }
        }
    }

    /// First derivative in `r` for `r > 0`.
    pub fn derivative(&self, r: f64) -> f64 {
        let z = self.scale * r;
        let dz = self.scale;
        match self.form {
            Form::Exponential => -dz * (-z).exp(),
            Form::MaternThreeHalves => -dz * z * (-z).exp(),
            Form::MaternFiveHalves => -dz * z * (1.0 + z) / 3.0 * (-z).exp(),
            Form::Gaussian => -dz * z * (-0.5 * z * z).exp(),
            Form::Matern { log_norm } => {
                if z == 0.0 {
                    return self.derivative_at_zero();
                }
                // d/dz [z^nu K_nu(z)] = -z^nu K_{nu-1}(z)
                let k = bessel::bessel_k_scaled(self.nu - 1.0, z);
                -dz * (log_norm + self.nu * z.ln() + k.ln() - z).exp()
            }
        }
    }

    /// Right derivative at the origin; infinite for rough Matérn kernels.
    pub fn derivative_at_zero(&self) -> f64 {
        match self.form {
            Form::Exponential => -self.scale,
            Form::Matern { .. } if self.nu < 0.5 => f64::NEG_INFINITY,
            _ => 0.0,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("{name} must be finite and positive, got {v}")))
    }
}

/// Checked covariance evaluation.
pub fn kernel_eval(model: &KernelModel, r: f64) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidInput(format!("distance must be finite and nonnegative, got {r}")));
    }
    Ok(model.eval(r))
}

/// Kernel evaluation with optional spline acceleration, as used in assembly loops.
#[derive(Debug, Clone)]
pub struct Covariance {
    model: KernelModel,
    spline: Option<SplineInterpolant>,
}

impl Covariance {
    pub fn exact(model: KernelModel) -> Self {
        Self { model, spline: None }
    }

    pub fn with_spline(model: KernelModel, tol: f64, r_max: f64) -> Result<Self> {
        let spline = SplineInterpolant::build(&model, tol, r_max)?;
        Ok(Self { model, spline: Some(spline) })
    }

    pub fn model(&self) -> &KernelModel {
        &self.model
    }

    pub fn spline(&self) -> Option<&SplineInterpolant> {
        self.spline.as_ref()
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match &self.spline {
            Some(s) => s.eval(r),
            None => self.model.eval(r),
        }
    }

    #[inline]
    pub fn between(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        self.eval(distance(a, b))
    }
}

/// `c_i = phi(|s_i - s0|)`.
pub fn cross_covariance(model: &KernelModel, data: &SpatialDataset, s0: &[f64]) -> Result<Vec<f64>> {
    if s0.len() != data.dim() {
        return Err(Error::LengthMismatch { expected: data.dim(), actual: s0.len() });
    }
    if s0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("target location is not finite".into()));
    }
    let mut target = [0.0; 3];
    target[..s0.len()].copy_from_slice(s0);
    Ok(data.locations().iter().map(|p| model.eval(distance(p, &target))).collect())
}
