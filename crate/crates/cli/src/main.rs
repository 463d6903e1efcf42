use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mlkrig::basis::{build_basis, DesignSpec, MultiLevelBasis};
use mlkrig::geometry::{build_tree, read_dataset, write_binary, write_csv, DecompositionTree, SpatialDataset, Tau};
use mlkrig::harness::{
    generate_dataset, preset, run_experiment, Cell, DatasetKind, DatasetSpec, ExperimentConfig, GpSampler, Study, Table,
};
use mlkrig::kernels::{Covariance, KernelModel, KernelSpec};
use mlkrig::krige::{KrigingOptions, KrigingSystem, Preconditioner};
use mlkrig::linalg::{CholFactor, OrderingMethod, SparseSpd};
use mlkrig::mlcov::assemble;
use mlkrig::reml::{Bounds, LevelChoice, RemlProblem, SimplexOptions};
use mlkrig::Error;

#[derive(Parser)]
#[command(name = "mlkrig", version, about = "Multi-level REML estimation and kriging for scattered data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic location set.
    GenData(GenData),
    /// Draw a Gaussian field realization at the locations of a dataset.
    Sample(Sample),
    /// Estimate covariance parameters by multi-level REML.
    Estimate(Estimate),
    /// Predict at target locations.
    Krige(Krige),
    /// Run a log-determinant tapering study.
    LogdetStudy(StudyArgs),
    /// Run a PCG iteration study.
    SolveStudy(StudyArgs),
    /// Run any experiment config or preset and print its tables.
    Report(StudyArgs),
    /// Decomposition tree statistics.
    TreeStats(TreeStats),
    /// Multi-level basis statistics.
    BasisStats(BasisArgs),
    /// Tapered covariance statistics.
    CovStats(CovArgs),
    /// Sparse Cholesky timing and log-determinant.
    CholBench(CholBench),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "uniform2d")]
    kind: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Draw from an independent stream per size instead of nested prefixes.
    #[arg(long)]
    no_nest: bool,
    /// CSV output, or raw binary for a `.bin` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Sample {
    /// Experiment config supplying dataset, kernel, f, beta and seed.
    #[arg(long, conflicts_with = "data")]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "matern:0.75,0.16666666666666666")]
    kernel: String,
    #[arg(long, default_value_t = 3)]
    f: u32,
    /// Comma-separated trend coefficients; all ones by default.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BasisArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3)]
    f: u32,
    #[arg(long = "ftilde", default_value_t = 4)]
    f_tilde: u32,
}

#[derive(Args)]
struct Estimate {
    #[command(flatten)]
    basis: BasisArgs,
    /// Kernel family with reference parameters used for the error columns.
    #[arg(long, default_value = "matern:0.75,0.16666666666666666")]
    kernel: String,
    #[arg(long, default_value = "1")]
    tau: String,
    #[arg(long, default_value = "auto")]
    min_level: String,
    #[arg(long, default_value = "0.5,1.25")]
    nu_box: String,
    #[arg(long, default_value = "0.14285714285714285,0.2")]
    rho_box: String,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Spline tolerance; 0 evaluates the kernel directly.
    #[arg(long, default_value_t = 5e-9)]
    spline_tol: f64,
    /// Accepted for config compatibility; estimation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV file for the per-evaluation trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// CSV file for the summary row.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Krige {
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long)]
    targets: PathBuf,
    #[arg(long, default_value = "matern:0.75,0.16666666666666666")]
    kernel: String,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value = "jacobi")]
    preconditioner: String,
    #[arg(long)]
    with_mse: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TreeStats {
    #[arg(long)]
    data: PathBuf,
    /// Leaf threshold; defaults to the number of monomials of degree `f`.
    #[arg(long)]
    leaf: Option<usize>,
    #[arg(long, default_value_t = 3)]
    f: u32,
}

#[derive(Args)]
struct CovArgs {
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long, default_value = "matern:0.75,0.16666666666666666")]
    kernel: String,
    #[arg(long, default_value = "1")]
    tau: String,
    #[arg(long, default_value = "-1")]
    min_level: String,
    /// Write the assembled matrix as `row col value` triplets.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args)]
struct CholBench {
    /// Triplet file to factor instead of assembling from a dataset.
    #[arg(long, conflicts_with = "data")]
    matrix: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    f: u32,
    #[arg(long = "ftilde", default_value_t = 4)]
    f_tilde: u32,
    #[arg(long, default_value = "matern:0.75,0.16666666666666666")]
    kernel: String,
    #[arg(long, default_value = "1")]
    tau: String,
    #[arg(long, default_value = "-1")]
    min_level: String,
    /// `amd` or `natural`.
    #[arg(long, default_value = "amd")]
    ordering: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

type Result<T> = std::result::Result<T, Error>;

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Sample(a) => sample(a),
        Command::Estimate(a) => estimate(a),
        Command::Krige(a) => krige(a),
        Command::LogdetStudy(a) => study(a, Some("logdet"), "table1"),
        Command::SolveStudy(a) => study(a, Some("solve"), "table4"),
        Command::Report(a) => study(a, None, ""),
        Command::TreeStats(a) => tree_stats(a),
        Command::BasisStats(a) => basis_stats(a),
        Command::CovStats(a) => cov_stats(a),
        Command::CholBench(a) => chol_bench(a),
    }
}

fn save(data: &SpatialDataset, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => write_binary(data, path),
        _ => write_csv(data, path),
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::Parse(format!("expected 'lower,upper', got '{s}'"))),
    }
}

fn model_of(kernel: &str) -> Result<KernelModel> {
    KernelModel::from_spec(kernel.parse::<KernelSpec>()?)
}

fn build(data: &SpatialDataset, f: u32, f_tilde: u32) -> Result<(DecompositionTree, MultiLevelBasis)> {
    let spec = DesignSpec::new(data.dim(), f, f_tilde)?;
    let tree = build_tree(data, spec.p())?;
    let basis = build_basis(&tree, data, spec)?;
    Ok((tree, basis))
}

fn gen_data(a: GenData) -> Result<()> {
    let spec = match &a.config {
        Some(path) => ExperimentConfig::load(path)?.dataset,
        None => DatasetSpec { kind: a.kind.parse::<DatasetKind>()?, n: a.n, seed: a.seed, nested: !a.no_nest },
    };
    let data = generate_dataset(&spec)?;
    save(&data, &a.out)?;
    println!("{} points ({}, seed {}) written to {}", data.len(), spec.kind, spec.seed, a.out.display());
    Ok(())
}

fn sample(a: Sample) -> Result<()> {
    let (data, model, f, beta, seed) = match &a.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            cfg.validate()?;
            (generate_dataset(&cfg.dataset)?, cfg.model()?, cfg.f, cfg.beta(), cfg.dataset.seed)
        }
        None => {
            let path = a.data.as_ref().ok_or_else(|| Error::InvalidInput("either --data or --config is required".into()))?;
            let data = read_dataset(path)?;
            let p = mlkrig::basis::poly::count(data.dim(), a.f);
            let beta = match &a.beta {
                Some(s) => s
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("beta: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
                None => vec![1.0; p],
            };
            (data, model_of(&a.kernel)?, a.f, beta, a.seed)
        }
    };
    let sampler = GpSampler::new(&data, &model, f)?;
    if sampler.jittered() {
        eprintln!("warning: covariance needed diagonal jitter {:e} to factor", mlkrig::harness::SAMPLE_JITTER);
    }
    let z = sampler.draw(&beta, seed, 0)?;
    let out = SpatialDataset::new(data.dim(), data.locations().to_vec(), Some(z))?;
    save(&out, &a.out)?;
    println!("{} values written to {}", out.len(), a.out.display());
    Ok(())
}

fn values_of(data: &SpatialDataset) -> Result<&[f64]> {
    data.values().ok_or_else(|| Error::InvalidInput("dataset has no value column".into()))
}

fn estimate(a: Estimate) -> Result<()> {
    let data = read_dataset(&a.basis.data)?;
    let z = values_of(&data)?.to_vec();
    let model = model_of(&a.kernel)?;
    let truth = model.theta();
    let tau: Tau = a.tau.parse()?;
    let level: LevelChoice = a.min_level.parse()?;
    let bounds: Vec<Bounds> = match truth.len() {
        2 => vec![parse_pair(&a.nu_box)?, parse_pair(&a.rho_box)?],
        _ => vec![parse_pair(&a.rho_box)?],
    }
    .into_iter()
    .map(|[l, u]| Bounds::new(l, u))
    .collect::<Result<_>>()?;
    let (tree, basis) = build(&data, a.basis.f, a.basis.f_tilde)?;
    let spline = (a.spline_tol > 0.0).then_some(a.spline_tol);
    let problem = RemlProblem::new(&tree, &basis, &z, model, tau, level, bounds)?
        .with_spline(spline)
        .with_options(SimplexOptions { tol: a.tol, max_iter: a.max_iter, ..SimplexOptions::default() });
    let fit = problem.estimate()?;
    let at = problem.evaluate(&fit.theta)?;
    if fit.degenerate {
        eprintln!("warning: contrasts vanish; the likelihood carries no information about theta");
    }
    if !fit.converged {
        eprintln!("warning: simplex stopped after {} iterations without meeting the tolerance", fit.iterations);
    }

    let names: &[&str] = if truth.len() == 2 { &["nu", "rho"] } else { &["rho"] };
    if let Some(path) = &a.trace {
        let mut headers: Vec<&str> = vec!["evaluation"];
        headers.extend(names.iter().copied());
        headers.extend(["loglik", "positive_definite", "nnz", "t_cons", "t_chol"]);
        let mut t = Table::new("trace", "Likelihood evaluations", &headers);
        for (k, e) in fit.trace.iter().enumerate() {
            let mut row: Vec<Cell> = vec![k.into()];
            row.extend(e.theta.iter().map(|&v| Cell::Num(v)));
            row.extend([
                e.loglik.into(),
                e.positive_definite.to_string().into(),
                e.nnz.into(),
                e.assembly_secs.into(),
                e.factor_secs.into(),
            ]);
            t.push(row);
        }
        t.write_csv(path, None)?;
    }

    let pd: Vec<_> = fit.trace.iter().filter(|e| e.positive_definite).collect();
    let k = pd.len().max(1) as f64;
    let mut headers: Vec<String> = ["n", "f_tilde", "i", "p_tilde"].map(String::from).to_vec();
    headers.extend(names.iter().map(|p| format!("{p}_hat")));
    headers.extend(names.iter().map(|p| format!("{p}_err")));
    headers.extend(["nnz_g_pct", "size", "t_cons", "t_chol", "iterations", "evaluations"].map(String::from));
    let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut t = Table::new("estimate", "Multi-level REML estimate", &refs);
    let size = fit.n_tilde as f64;
    let mut row: Vec<Cell> = vec![data.len().into(), (a.basis.f_tilde as usize).into(), fit.min_level.into(), basis.spec().p_tilde().into()];
    row.extend(fit.theta.iter().map(|&v| Cell::Num(v)));
    row.extend(fit.theta.iter().zip(&truth).map(|(h, t)| Cell::Num(h - t)));
    row.extend([
        (100.0 * at.factor_nnz as f64 / (size * size)).into(),
        fit.n_tilde.into(),
        (pd.iter().map(|e| e.assembly_secs).sum::<f64>() / k).into(),
        (pd.iter().map(|e| e.factor_secs).sum::<f64>() / k).into(),
        fit.iterations.into(),
        fit.evaluations.into(),
    ]);
    t.push(row);
    print!("{}", t.render());
    if let Some(path) = &a.out {
        t.write_csv(path, None)?;
    }
    Ok(())
}

fn krige(a: Krige) -> Result<()> {
    let data = read_dataset(&a.basis.data)?;
    let z = values_of(&data)?.to_vec();
    let targets = read_dataset(&a.targets)?;
    if targets.dim() != data.dim() {
        return Err(Error::InvalidInput(format!("targets are {}D but data are {}D", targets.dim(), data.dim())));
    }
    let cov = Covariance::exact(model_of(&a.kernel)?);
    let (_, basis) = build(&data, a.basis.f, a.basis.f_tilde)?;
    let opts = KrigingOptions { eps: a.eps, preconditioner: a.preconditioner.parse::<Preconditioner>()?, ..KrigingOptions::default() };
    let t0 = Instant::now();
    let sys = KrigingSystem::new(&basis, &data, &cov, opts)?;
    let sol = sys.solve(&z)?;
    let ws = if a.with_mse { Some(sys.mse_workspace()?) } else { None };
    let dim = data.dim();
    let mut w = csv::Writer::from_path(&a.out).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut header = vec!["target_id".to_string()];
    header.extend(["x", "y", "z"][..dim].iter().map(|s| s.to_string()));
    header.push("zhat".into());
    if a.with_mse {
        header.push("mse".into());
    }
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    let mut clamped = 0;
    for (k, p) in targets.locations().iter().enumerate() {
        let s0 = &p[..dim];
        let mut rec = vec![k.to_string()];
        rec.extend(s0.iter().map(|v| format!("{v:?}")));
        rec.push(format!("{:?}", sys.predict(&sol, s0)?));
        if let Some(ws) = &ws {
            let m = sys.mse(ws, s0)?;
            clamped += m.clamped as usize;
            rec.push(format!("{:?}", m.value));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    if clamped > 0 {
        eprintln!("warning: {clamped} slightly negative MSE values clamped to 0");
    }
    println!(
        "{} targets written to {}; PCG {} iterations, residual {:.3e}, beta = {:?}, {:.2} s",
        targets.len(),
        a.out.display(),
        sol.report.iterations,
        sol.report.relative_residual,
        sol.beta,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

fn study(a: StudyArgs, kind: Option<&str>, default_preset: &str) -> Result<()> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) if !default_preset.is_empty() => preset(default_preset)?,
        (None, None) => return Err(Error::InvalidInput("either --config or --preset is required".into())),
    };
    let actual = match cfg.study {
        Study::Logdet { .. } => "logdet",
        Study::Estimate { .. } => "estimate",
        Study::Solve { .. } => "solve",
        Study::Krige { .. } => "krige",
    };
    if let Some(k) = kind {
        if k != actual {
            return Err(Error::InvalidInput(format!("config '{}' describes a {actual} study, expected {k}", cfg.name)));
        }
    }
    if let Some(out) = a.out {
        cfg.output = Some(out);
    }
    let report = run_experiment(&cfg)?;
    println!("{} (config {})\n", cfg.name, report.config_hash);
    println!("{}", report.output.render());
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn tree_stats(a: TreeStats) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let leaf = a.leaf.unwrap_or_else(|| mlkrig::basis::poly::count(data.dim(), a.f));
    let s = build_tree(&data, leaf)?.stats();
    println!("n                  {}", s.n);
    println!("levels (t)         {}", s.max_level);
    println!("cubes              {}", s.cubes);
    println!("leaves             {}", s.leaves);
    println!("max leaf occupancy {}", s.max_leaf_occupancy);
    println!("min leaf occupancy {}", s.min_leaf_occupancy);
    Ok(())
}

fn basis_stats(a: BasisArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let (_, basis) = build(&data, a.f, a.f_tilde)?;
    let mut t = Table::new("basis", "Contrast rows per level", &["level", "groups", "rows", "nnz"]);
    for s in basis.level_stats() {
        t.push(vec![s.level.into(), s.groups.into(), s.rows.into(), s.nnz.into()]);
    }
    print!("{}", t.render());
    let (ann_f, ann_ft) = basis.annihilation_residuals();
    println!("p = {}, p_tilde = {}, contrasts = {}", basis.p(), basis.spec().p_tilde(), basis.num_contrasts());
    println!("nnz(W) = {}", basis.nnz_w());
    println!("max |W M_f| = {ann_f:.3e}, max |W M_f_tilde| (levels >= 0) = {ann_ft:.3e}");
    Ok(())
}

fn assembled(data: &SpatialDataset, f: u32, f_tilde: u32, kernel: &str, tau: &str, level: &str) -> Result<mlkrig::mlcov::TaperedCovariance> {
    let (tree, basis) = build(data, f, f_tilde)?;
    let cov = Covariance::exact(model_of(kernel)?);
    let min_level = level.parse::<LevelChoice>()?.resolve(&basis);
    assemble(&basis, &tree, &cov, tau.parse()?, min_level)
}

fn cov_stats(a: CovArgs) -> Result<()> {
    let data = read_dataset(&a.basis.data)?;
    let t0 = Instant::now();
    let c = assembled(&data, a.basis.f, a.basis.f_tilde, &a.kernel, &a.tau, &a.min_level)?;
    let secs = t0.elapsed().as_secs_f64();
    let s = c.stats();
    println!("size       {}", s.size);
    println!("stored     {}", s.stored);
    println!("density    {:.2} %", 100.0 * s.density);
    println!("diagonal   [{:.6e}, {:.6e}]", s.min_diag, s.max_diag);
    println!("assembly   {secs:.3} s");
    let mut t = Table::new("blocks", "Stored entries per level pair", &["row_level", "col_level", "entries"]);
    for p in &s.level_pairs {
        t.push(vec![p.row_level.into(), p.col_level.into(), p.entries.into()]);
    }
    print!("{}", t.render());
    if let Some(path) = &a.export {
        c.write_triplets(path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn chol_bench(a: CholBench) -> Result<()> {
    let matrix = match (&a.matrix, &a.data) {
        (Some(path), _) => SparseSpd::read_triplets(path)?,
        (None, Some(path)) => {
            let data = read_dataset(path)?;
            assembled(&data, a.f, a.f_tilde, &a.kernel, &a.tau, &a.min_level)?.into_matrix()
        }
        (None, None) => return Err(Error::InvalidInput("either --matrix or --data is required".into())),
    };
    let method = match a.ordering.as_str() {
        "amd" => OrderingMethod::MinimumDegree,
        "natural" => OrderingMethod::Natural,
        other => return Err(Error::InvalidInput(format!("unknown ordering '{other}', expected amd or natural"))),
    };
    let t0 = Instant::now();
    let factor = CholFactor::factor_with(&matrix, &method)?;
    let secs = t0.elapsed().as_secs_f64();
    let n = matrix.n() as f64;
    println!("size       {}", matrix.n());
    println!("nnz(A)     {} (upper)", matrix.nnz());
    println!("nnz(G)     {} ({:.2} %)", factor.nnz(), 100.0 * factor.nnz() as f64 / (n * n));
    println!("factor     {secs:.3} s");
    println!("log det    {:.12e}", factor.log_det());
    Ok(())
}
