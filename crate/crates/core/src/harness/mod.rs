//! Synthetic datasets, Gaussian field sampling and the experiment runner.

mod data;
mod direct;
mod report;
mod sample;
mod studies;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Tau;
use crate::kernels::{KernelFamily, KernelModel, KernelSpec};
use crate::krige::Preconditioner;
use crate::reml::LevelChoice;

pub use data::{generate_dataset, generate_targets, in_carved_disk, DatasetKind, DatasetSpec, CARVED_DISKS};
pub use direct::dense_kriging;
pub use report::{Cell, Table};
pub use sample::{sample_gp, GpSampler, SAMPLE_JITTER};

fn default_f() -> u32 {
    3
}

fn default_tau() -> Tau {
    Tau::Finite(1)
}

fn minus_one() -> i32 {
    -1
}

fn default_nm_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Study {
    /// Log-determinant of the tapered contrast covariance for several `tau`.
    Logdet {
        taus: Vec<Tau>,
        #[serde(default = "minus_one")]
        min_level: i32,
    },
    /// REML estimation over replicated fields at fixed locations.
    Estimate {
        levels: Vec<LevelChoice>,
        replicates: usize,
        /// `[lower, upper]` per parameter, in `theta` order.
        bounds: Vec<[f64; 2]>,
        #[serde(default)]
        spline_tol: Option<f64>,
        #[serde(default = "default_nm_tol")]
        tol: f64,
    },
    /// PCG on `C_W` against plain CG on `C`.
    Solve {
        sizes: Vec<usize>,
        eps: f64,
        #[serde(default)]
        preconditioner: Preconditioner,
        #[serde(default)]
        baseline: bool,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    /// Kriging predictions against dense direct kriging.
    Krige { sizes: Vec<usize>, targets: usize, eps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    /// Kernel with the true parameters.
    pub kernel: KernelSpec,
    #[serde(default = "default_f")]
    pub f: u32,
    /// True trend coefficients; all ones when absent.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    pub f_tilde: u32,
    #[serde(default = "default_tau")]
    pub tau: Tau,
    pub study: Study,
    /// Output directory; excluded from the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads TOML, or JSON for `.json` files.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn model(&self) -> Result<KernelModel> {
        KernelModel::from_spec(self.kernel)
    }

    pub fn dim(&self) -> usize {
        self.dataset.kind.dim()
    }

    pub fn beta(&self) -> Vec<f64> {
        let p = crate::basis::poly::count(self.dim(), self.f);
        self.beta.clone().unwrap_or_else(|| vec![1.0; p])
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let p = crate::basis::poly::count(self.dim(), self.f);
        if self.beta().len() != p {
            return Err(Error::InvalidInput(format!("beta needs {p} coefficients, got {}", self.beta().len())));
        }
        crate::basis::DesignSpec::new(self.dim(), self.f, self.f_tilde)?;
        match &self.study {
            Study::Logdet { taus, .. } if taus.is_empty() => Err(Error::InvalidInput("no tau values".into())),
            Study::Estimate { bounds, tol, .. } => {
                if bounds.len() != model.theta().len() {
                    return Err(Error::InvalidInput(format!(
                        "{} kernel has {} parameters, got {} boxes",
                        model.family(),
                        model.theta().len(),
                        bounds.len()
                    )));
                }
                if !(*tol > 0.0) {
                    return Err(Error::InvalidInput("tol must be positive".into()));
                }
                Ok(())
            }
            Study::Solve { eps, .. } | Study::Krige { eps, .. } if !(*eps > 0.0) => {
                Err(Error::InvalidInput("eps must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON form, output path excluded; 16 hex digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("results").join(&self.name))
    }
}

/// Names of the built-in desk-scale presets.
pub const PRESETS: [&str; 5] = ["table1", "table2", "table3", "table4", "table5"];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let matern = |nu: f64, rho: f64| KernelSpec { family: KernelFamily::Matern, nu: Some(nu), rho };
    let exponential = |rho: f64| KernelSpec { family: KernelFamily::Exponential, nu: None, rho };
    let estimate = |levels: Vec<LevelChoice>, replicates: usize| Study::Estimate {
        levels,
        replicates,
        bounds: vec![[0.5, 1.25], [1.0 / 7.0, 0.2]],
        spline_tol: Some(5e-9),
        tol: 1e-3,
    };
    let base = |dataset: DatasetSpec, kernel: KernelSpec, f_tilde: u32, study: Study| ExperimentConfig {
        name: name.to_string(),
        dataset,
        kernel,
        f: 3,
        beta: None,
        f_tilde,
        tau: Tau::Finite(1),
        study,
        output: None,
    };
    let cfg = match name {
        "table1" => base(
            DatasetSpec::new(DatasetKind::Uniform3d, 8000, 1),
            exponential(1.0),
            3,
            Study::Logdet { taus: vec![Tau::Finite(0), Tau::Finite(1), Tau::Finite(2), Tau::Infinite], min_level: -1 },
        ),
        "table2" => base(
            DatasetSpec::new(DatasetKind::Uniform2d, 4000, 2),
            matern(0.75, 1.0 / 6.0),
            4,
            estimate(vec![LevelChoice::Deepest, LevelChoice::Auto, LevelChoice::Below(2)], 1),
        ),
        "table3" => base(
            DatasetSpec::new(DatasetKind::Uniform2d, 4000, 3),
            matern(0.75, 1.0 / 6.0),
            4,
            estimate(vec![LevelChoice::Deepest, LevelChoice::Auto], 20),
        ),
        "table4" => base(
            DatasetSpec::new(DatasetKind::Uniform2d, 4000, 4),
            matern(1.0, 1.0 / 6.0),
            3,
            Study::Solve {
                sizes: vec![1000, 2000, 4000],
                eps: 1e-3,
                preconditioner: Preconditioner::Jacobi,
                baseline: true,
                max_iter: default_max_iter(),
            },
        ),
        "table5" => base(
            DatasetSpec::new(DatasetKind::Uniform3d, 4000, 5),
            exponential(1.0 / 5.9915),
            3,
            Study::Krige { sizes: vec![1000, 2000, 4000], targets: 1000, eps: 1e-5 },
        ),
        other => return Err(Error::InvalidInput(format!("unknown preset '{other}', expected one of {}", PRESETS.join(", ")))),
    };
    Ok(cfg)
}

/// Tables produced by a run; `timings` holds every wall-clock column.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub results: Vec<Table>,
    pub timings: Option<Table>,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.results.iter().find(|t| t.name == name)
    }

    pub fn render(&self) -> String {
        let mut out: Vec<String> = self.results.iter().map(Table::render).collect();
        if let Some(t) = &self.timings {
            out.push(t.render());
        }
        out.join("\n")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output: ExperimentOutput,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
}

pub(crate) fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage { stage: name.to_string(), source: Box::new(e) },
    })
}

/// Runs the configured study and writes `<name>[_table].csv`, `<name>_timings.csv`
/// and `<name>.txt` into the output directory. Tables collected before a
/// failing stage are still written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    stage("config", config.validate())?;
    let dir = config.output_dir();
    fs::create_dir_all(&dir)?;
    let mut output = ExperimentOutput::default();
    let outcome = studies::run(config, &mut output);
    let hash = config.hash();
    let files = write_outputs(config, &output, &dir, &hash)?;
    outcome?;
    Ok(ExperimentReport { output, config_hash: hash, files })
}

/// Runs a study in memory without writing files.
pub fn run_in_memory(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut output = ExperimentOutput::default();
    studies::run(config, &mut output)?;
    Ok(output)
}

fn write_outputs(config: &ExperimentConfig, output: &ExperimentOutput, dir: &Path, hash: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for t in output.results.iter().chain(output.timings.as_ref()) {
        let path = dir.join(format!("{}.csv", t.name));
        t.write_csv(&path, Some(hash))?;
        files.push(path);
    }
    let text = dir.join(format!("{}.txt", config.name));
    fs::write(&text, format!("{} (config {hash})\n\n{}", config.name, output.render()))?;
    files.push(text);
    Ok(files)
}
