use std::collections::BTreeMap;
use std::time::Instant;

use super::data::{generate_dataset, generate_targets};
use super::direct::dense_kriging;
use super::report::{Cell, Table};
use super::sample::GpSampler;
use super::{stage, ExperimentConfig, ExperimentOutput, Study};
use crate::basis::{build_basis, DesignSpec, MultiLevelBasis};
use crate::error::{Error, Result};
use crate::geometry::{build_tree, DecompositionTree, SpatialDataset, Tau};
use crate::kernels::{Covariance, KernelFamily, KernelModel};
use crate::krige::{KrigingOptions, KrigingSystem, Preconditioner};
use crate::linalg::{pcg, CholFactor};
use crate::mlcov::assemble;
use crate::reml::{Bounds, LevelChoice, RemlProblem, SimplexOptions};

pub(super) fn run(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    match &cfg.study {
        Study::Logdet { taus, min_level } => logdet(cfg, taus, *min_level, out),
        Study::Estimate { levels, replicates, bounds, spline_tol, tol } => {
            estimate(cfg, levels, *replicates, bounds, *spline_tol, *tol, out)
        }
        Study::Solve { sizes, eps, preconditioner, baseline, max_iter } => {
            solve(cfg, sizes, *eps, *preconditioner, *baseline, *max_iter, out)
        }
        Study::Krige { sizes, targets, eps } => krige(cfg, sizes, *targets, *eps, out),
    }
}

fn build(cfg: &ExperimentConfig, data: &SpatialDataset) -> Result<(DecompositionTree, MultiLevelBasis)> {
    let spec = DesignSpec::new(data.dim(), cfg.f, cfg.f_tilde)?;
    let tree = build_tree(data, spec.p())?;
    let basis = build_basis(&tree, data, spec)?;
    Ok((tree, basis))
}

fn param_names(model: &KernelModel) -> Vec<&'static str> {
    match model.family() {
        KernelFamily::Matern => vec!["nu", "rho"],
        _ => vec!["rho"],
    }
}

/// Adds `table` to the output and returns its index.
fn open(list: &mut Vec<Table>, table: Table) -> usize {
    list.push(table);
    list.len() - 1
}

fn logdet(cfg: &ExperimentConfig, taus: &[Tau], min_level: i32, out: &mut ExperimentOutput) -> Result<()> {
    let data = stage("dataset", generate_dataset(&cfg.dataset))?;
    let (tree, basis) = stage("basis", build(cfg, &data))?;
    let cov = Covariance::exact(cfg.model()?);
    let res = open(
        &mut out.results,
        Table::new(
            &cfg.name,
            "Log-determinant of the tapered contrast covariance",
            &["n", "tau", "min_level", "size", "density_pct", "log_det", "eps_abs", "eps_rel", "status"],
        ),
    );
    out.timings = Some(Table::new(&format!("{}_timings", cfg.name), "Wall clock (s)", &["tau", "t_cons", "t_chol"]));

    struct Entry {
        density: f64,
        size: usize,
        log_det: Option<f64>,
        t_cons: f64,
        t_chol: f64,
    }
    let mut cache: BTreeMap<String, Entry> = BTreeMap::new();
    let mut compute = |tau: Tau| -> Result<()> {
        if cache.contains_key(&tau.to_string()) {
            return Ok(());
        }
        let t0 = Instant::now();
        let c = stage("assemble", assemble(&basis, &tree, &cov, tau, min_level))?;
        let t_cons = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let log_det = match CholFactor::analyze_and_factor(c.matrix()) {
            Ok(f) => Some(f.log_det()),
            Err(Error::NotPositiveDefinite { .. }) => None,
            Err(e) => return stage("factor", Err(e)),
        };
        let t_chol = t0.elapsed().as_secs_f64();
        let m = c.size() as f64;
        cache.insert(
            tau.to_string(),
            Entry { density: 100.0 * c.matrix().nnz() as f64 / (m * m), size: c.size(), log_det, t_cons, t_chol },
        );
        Ok(())
    };
    compute(Tau::Infinite)?;
    for &tau in taus {
        compute(tau)?;
    }
    let reference = cache[&Tau::Infinite.to_string()].log_det;
    for &tau in taus {
        let e = &cache[&tau.to_string()];
        let (ld, abs, rel, status) = match (e.log_det, reference) {
            (Some(ld), Some(r)) => (Cell::Num(ld), Cell::Num((ld - r).abs()), Cell::Num((ld - r).abs() / r.abs()), "ok"),
            (Some(ld), None) => (Cell::Num(ld), Cell::from("-"), Cell::from("-"), "reference not positive definite"),
            (None, _) => (Cell::from("-"), Cell::from("-"), Cell::from("-"), "not positive definite"),
        };
        out.results[res].push(vec![
            data.len().into(),
            tau.to_string().into(),
            min_level.into(),
            e.size.into(),
            e.density.into(),
            ld,
            abs,
            rel,
            status.into(),
        ]);
        if let Some(t) = out.timings.as_mut() {
            t.push(vec![tau.to_string().into(), e.t_cons.into(), e.t_chol.into()]);
        }
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn estimate(
    cfg: &ExperimentConfig,
    levels: &[LevelChoice],
    replicates: usize,
    bounds: &[[f64; 2]],
    spline_tol: Option<f64>,
    tol: f64,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let model = cfg.model()?;
    let truth = model.theta();
    let names = param_names(&model);
    let bounds = bounds.iter().map(|b| Bounds::new(b[0], b[1])).collect::<Result<Vec<_>>>()?;
    let data = stage("dataset", generate_dataset(&cfg.dataset))?;
    let (tree, basis) = stage("basis", build(cfg, &data))?;
    let t = basis.deepest_contrast_level().map_or(-1, |t| t as i32);
    let p_tilde = basis.spec().p_tilde();

    let mut headers: Vec<String> = ["replicate", "level", "i", "p_tilde", "n_tilde"].map(String::from).to_vec();
    headers.extend(names.iter().map(|p| format!("{p}_hat")));
    headers.extend(names.iter().map(|p| format!("{p}_err")));
    headers.extend(["loglik", "factor_nnz_pct", "iterations", "evaluations", "converged", "non_pd"].map(String::from));
    let mut summary_headers: Vec<String> = ["level", "i", "p_tilde", "t", "M"].map(String::from).to_vec();
    summary_headers.extend(names.iter().map(|p| format!("mean_{p}_err")));
    summary_headers.extend(names.iter().map(|p| format!("std_{p}")));
    let as_str = |h: &[String]| h.iter().map(String::clone).collect::<Vec<_>>();
    let mk = |name: String, title: &str, h: &[String]| {
        let refs: Vec<&str> = h.iter().map(String::as_str).collect();
        Table::new(&name, title, &refs)
    };
    let res = open(&mut out.results, mk(cfg.name.clone(), "REML estimates per replicate", &as_str(&headers)));
    let sum = open(
        &mut out.results,
        mk(format!("{}_summary", cfg.name), "Bias and spread over replicates", &as_str(&summary_headers)),
    );
    out.timings = Some(Table::new(
        &format!("{}_timings", cfg.name),
        "Wall clock (s); t_cons and t_chol are means per likelihood evaluation",
        &["replicate", "level", "t_cons", "t_chol", "t_total"],
    ));

    let mut estimates: Vec<Vec<Vec<f64>>> = vec![Vec::new(); levels.len()];
    if replicates > 0 {
        let sampler = stage("sample", GpSampler::new(&data, &model, cfg.f))?;
        let beta = cfg.beta();
        let opts = SimplexOptions { tol, ..SimplexOptions::default() };
        for r in 0..replicates {
            let z = stage("sample", sampler.draw(&beta, cfg.dataset.seed, r as u64))?;
            for (li, &level) in levels.iter().enumerate() {
                let t0 = Instant::now();
                let problem = stage("estimate", RemlProblem::new(&tree, &basis, &z, model.clone(), cfg.tau, level, bounds.clone()))?
                    .with_spline(spline_tol)
                    .with_options(opts);
                let fit = stage("estimate", problem.estimate())?;
                let at = stage("estimate", problem.evaluate(&fit.theta))?;
                let t_total = t0.elapsed().as_secs_f64();
                let m = fit.n_tilde as f64;
                let mut row: Vec<Cell> = vec![
                    r.into(),
                    level.to_string().into(),
                    fit.min_level.into(),
                    p_tilde.into(),
                    fit.n_tilde.into(),
                ];
                row.extend(fit.theta.iter().map(|&v| Cell::Num(v)));
                row.extend(fit.theta.iter().zip(&truth).map(|(a, b)| Cell::Num(a - b)));
                row.extend([
                    fit.loglik.into(),
                    (100.0 * at.factor_nnz as f64 / (m * m)).into(),
                    fit.iterations.into(),
                    fit.evaluations.into(),
                    fit.converged.to_string().into(),
                    fit.non_pd_evaluations.into(),
                ]);
                out.results[res].push(row);
                let pd: Vec<_> = fit.trace.iter().filter(|e| e.positive_definite).collect();
                let k = pd.len().max(1) as f64;
                if let Some(tt) = out.timings.as_mut() {
                    tt.push(vec![
                        r.into(),
                        level.to_string().into(),
                        (pd.iter().map(|e| e.assembly_secs).sum::<f64>() / k).into(),
                        (pd.iter().map(|e| e.factor_secs).sum::<f64>() / k).into(),
                        t_total.into(),
                    ]);
                }
                estimates[li].push(fit.theta);
            }
        }
    }
    if replicates == 0 {
        return Ok(());
    }
    for (li, level) in levels.iter().enumerate() {
        let mut row: Vec<Cell> =
            vec![level.to_string().into(), level.resolve(&basis).into(), p_tilde.into(), t.into(), replicates.into()];
        let stats: Vec<(f64, f64)> = (0..truth.len())
            .map(|k| mean_std(&estimates[li].iter().map(|th| th[k]).collect::<Vec<_>>()))
            .collect();
        row.extend(stats.iter().zip(&truth).map(|((m, _), tr)| Cell::Num(m - tr)));
        row.extend(stats.iter().map(|(_, s)| Cell::Num(*s)));
        out.results[sum].push(row);
    }
    Ok(())
}

fn solve(
    cfg: &ExperimentConfig,
    sizes: &[usize],
    eps: f64,
    preconditioner: Preconditioner,
    baseline: bool,
    max_iter: usize,
    out: &mut ExperimentOutput,
) -> Result<()> {
    let model = cfg.model()?;
    let cov = Covariance::exact(model.clone());
    let beta = cfg.beta();
    let res = open(
        &mut out.results,
        Table::new(
            &cfg.name,
            "Iterations to reach the unpreconditioned tolerance",
            &["n", "p", "p_tilde", "itr_cw", "itr_c", "eps_pcg", "residual_cw", "residual_c"],
        ),
    );
    out.timings = Some(Table::new(
        &format!("{}_timings", cfg.name),
        "Wall clock (s)",
        &["n", "t_diag", "t_itr", "t_total", "t_cg"],
    ));
    for &n in sizes {
        let data = stage("dataset", generate_dataset(&cfg.dataset.with_n(n)))?;
        let z = stage("sample", GpSampler::new(&data, &model, cfg.f).and_then(|s| s.draw(&beta, cfg.dataset.seed, 0)))?;
        let (_, basis) = stage("basis", build(cfg, &data))?;
        let t0 = Instant::now();
        let opts = KrigingOptions { eps, eps_pcg: None, max_iter, preconditioner };
        let sys = stage("precondition", KrigingSystem::new(&basis, &data, &cov, opts))?;
        let t_diag = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let (itr_cw, eps_pcg, residual_cw) = match sys.solve(&z) {
            Ok(sol) => (
                Cell::from(sol.report.iterations),
                Cell::Num(sol.report.preconditioned_residuals.last().copied().unwrap_or(0.0)),
                Cell::Num(sol.report.relative_residual),
            ),
            Err(Error::NotConverged { iterations, residual, .. }) => {
                (Cell::Text(format!(">{iterations}")), Cell::from("-"), Cell::Num(residual))
            }
            Err(e) => return stage("solve", Err(e)),
        };
        let t_itr = t1.elapsed().as_secs_f64();
        let (itr_c, residual_c, t_cg) = if baseline {
            let t2 = Instant::now();
            let zt = basis.to_tree_order(&z);
            let ones = vec![1.0; n];
            let op = sys.operator();
            let r = match pcg(|x, y| op.apply_c_tree(x, y), &ones, &zt, eps, eps, max_iter) {
                Ok((_, rep)) => (Cell::from(rep.iterations), Cell::Num(rep.relative_residual)),
                Err(Error::NotConverged { iterations, residual, .. }) => (Cell::Text(format!(">{iterations}")), Cell::Num(residual)),
                Err(e) => return stage("baseline", Err(e)),
            };
            (r.0, r.1, Cell::Num(t2.elapsed().as_secs_f64()))
        } else {
            (Cell::from("-"), Cell::from("-"), Cell::from("-"))
        };
        out.results[res].push(vec![
            data.len().into(),
            basis.p().into(),
            basis.spec().p_tilde().into(),
            itr_cw,
            itr_c,
            eps_pcg,
            residual_cw,
            residual_c,
        ]);
        if let Some(t) = out.timings.as_mut() {
            t.push(vec![data.len().into(), t_diag.into(), t_itr.into(), (t_diag + t_itr).into(), t_cg]);
        }
    }
    Ok(())
}

fn krige(cfg: &ExperimentConfig, sizes: &[usize], targets: usize, eps: f64, out: &mut ExperimentOutput) -> Result<()> {
    let model = cfg.model()?;
    let cov = Covariance::exact(model.clone());
    let beta = cfg.beta();
    let dim = cfg.dim();
    let res = open(
        &mut out.results,
        Table::new(
            &cfg.name,
            "Relative l2 error of multi-level kriging against dense direct kriging",
            &["n", "targets", "l2_rel_error", "pcg_iterations", "residual"],
        ),
    );
    out.timings = Some(Table::new(&format!("{}_timings", cfg.name), "Wall clock (s)", &["n", "t_multilevel", "t_direct"]));
    let pts = generate_targets(targets, dim, cfg.dataset.seed);
    for &n in sizes {
        let data = stage("dataset", generate_dataset(&cfg.dataset.with_n(n)))?;
        let z = stage("sample", GpSampler::new(&data, &model, cfg.f).and_then(|s| s.draw(&beta, cfg.dataset.seed, 0)))?;
        let (_, basis) = stage("basis", build(cfg, &data))?;
        let t0 = Instant::now();
        let opts = KrigingOptions { eps, ..KrigingOptions::default() };
        let sys = stage("solve", KrigingSystem::new(&basis, &data, &cov, opts))?;
        let sol = stage("solve", sys.solve(&z))?;
        let pred = stage("predict", sys.predict_many(&sol, &pts))?;
        let t_ml = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let direct = stage("direct", dense_kriging(&data, &model, cfg.f, &z, &pts))?;
        let t_direct = t1.elapsed().as_secs_f64();
        let num = pred.iter().zip(&direct).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = direct.iter().map(|b| b * b).sum::<f64>().sqrt();
        let err = if targets == 0 { 0.0 } else { num / den };
        out.results[res].push(vec![
            data.len().into(),
            targets.into(),
            err.into(),
            sol.report.iterations.into(),
            sol.report.relative_residual.into(),
        ]);
        if let Some(t) = out.timings.as_mut() {
            t.push(vec![data.len().into(), t_ml.into(), t_direct.into()]);
        }
    }
    Ok(())
}
