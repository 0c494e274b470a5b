use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use hessian_spectra::landscape::landscape;
use hessian_spectra::nn::{HessianOperator, Objective};
use hessian_spectra::operator::restrict_to_block;
use hessian_spectra::spectral::{
    hutchinson_trace, slq_density, top_eigenpairs, DensityConfig, EigenResult, ProbeConfig,
};
use hessian_spectra::SymmetricOperator;

use crate::check::run_checks;
use crate::config::{Analysis, RunConfig};
use crate::error::CliError;
use crate::job::{Command, JobSpec};
use crate::output::{write_json, Csv, CsvField};

pub type Hessian = HessianOperator<Arc<dyn Objective>>;

/// The operator a job analyses: the full Hessian or a block of it.
pub struct Target {
    pub op: Box<dyn SymmetricOperator>,
    /// Full-parameter coordinates of the operator's coordinates.
    pub indices: Vec<usize>,
    pub full_dim: usize,
}

impl Target {
    pub fn new(analysis: &Analysis, stage: Option<&[String]>) -> Result<Self, CliError> {
        let hess =
            HessianOperator::new(analysis.objective.clone(), analysis.theta.clone()).map_err(CliError::analysis)?;
        let full_dim = hess.dim();
        match stage {
            None => Ok(Target { op: Box::new(hess), indices: (0..full_dim).collect(), full_dim }),
            Some(names) => {
                let layout = analysis.layout().clone();
                let r = restrict_to_block(hess, &layout, names).map_err(CliError::config)?;
                let indices = r.indices().to_vec();
                Ok(Target { op: Box::new(r), indices, full_dim })
            }
        }
    }

    /// Scatters a vector of the restricted space into full parameter space.
    pub fn embed(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim];
        for (&i, &x) in self.indices.iter().zip(v) {
            out[i] = x;
        }
        out
    }
}

/// Loads the config, runs the job inside a pool of `spec.threads` workers and
/// writes its outputs. Returns the files written.
pub fn run(spec: &JobSpec, config: &RunConfig) -> Result<Vec<std::path::PathBuf>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| CliError::Analysis(format!("cannot start thread pool: {e}")))?;
    pool.install(|| {
        let analysis = config.build()?;
        let target = Target::new(&analysis, spec.stage.as_deref())?;
        match spec.command {
            Command::Eig => eig(spec, &target),
            Command::Trace => trace(spec, &target),
            Command::Density => density(spec, &target),
            Command::Landscape => landscape_cmd(spec, &analysis, &target),
            Command::Check => run_checks(spec, &analysis, &target),
        }
    })
}

fn probes(spec: &JobSpec) -> ProbeConfig {
    ProbeConfig { distribution: spec.distribution, seed: spec.seed, count: spec.n_v }
}

fn stage_json(spec: &JobSpec) -> serde_json::Value {
    json!(spec.stage)
}

pub fn top_pairs(spec: &JobSpec, target: &Target, k: usize) -> Result<EigenResult, CliError> {
    let m = target.op.dim();
    if k > m {
        return Err(CliError::Usage(format!("top_k = {k} exceeds the operator dimension {m}")));
    }
    top_eigenpairs(&target.op, k, &spec.power_config()).map_err(CliError::analysis)
}

fn eig(spec: &JobSpec, target: &Target) -> Result<Vec<std::path::PathBuf>, CliError> {
    let res = top_pairs(spec, target, spec.top_k)?;
    let mut written = Vec::new();
    let path = spec.path("eig.json");
    write_json(
        &path,
        &json!({
            "command": "eig",
            "dim": target.op.dim(),
            "stage": stage_json(spec),
            "seed": spec.seed,
            "tol": spec.tol,
            "max_iter": spec.max_iter,
            "eigenvalues": res.values(),
            "residuals": res.pairs.iter().map(|p| p.residual).collect::<Vec<_>>(),
            "iterations": res.pairs.iter().map(|p| p.iterations).collect::<Vec<_>>(),
            "converged": res.pairs.iter().map(|p| p.converged).collect::<Vec<_>>(),
        }),
    )?;
    written.push(path);
    if spec.save_vectors {
        let names: Vec<String> = (1..=res.pairs.len()).map(|j| format!("u{j}")).collect();
        let mut header = vec!["index"];
        header.extend(names.iter().map(String::as_str));
        let mut csv = Csv::new(&header);
        for i in 0..target.op.dim() {
            let mut row = vec![CsvField::Int(target.indices[i])];
            row.extend(res.pairs.iter().map(|p| CsvField::Float(p.vector[i])));
            csv.row(&row);
        }
        let path = spec.path("eigvecs.csv");
        csv.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn trace(spec: &JobSpec, target: &Target) -> Result<Vec<std::path::PathBuf>, CliError> {
    let est = hutchinson_trace(&target.op, &probes(spec)).map_err(CliError::analysis)?;
    let mut csv = Csv::new(&["n", "estimate", "stderr"]);
    for (i, (m, s)) in est.running_means.iter().zip(&est.running_stderr).enumerate() {
        csv.row(&[CsvField::Int(i + 1), CsvField::Float(*m), CsvField::Float(*s)]);
    }
    let csv_path = spec.path("trace.csv");
    csv.write(&csv_path)?;
    let json_path = spec.path("trace.json");
    write_json(
        &json_path,
        &json!({
            "command": "trace",
            "dim": target.op.dim(),
            "stage": stage_json(spec),
            "seed": spec.seed,
            "n_v": spec.n_v,
            "distribution": spec.distribution,
            "estimate": est.mean,
            "stderr": finite(est.stderr),
            "samples": est.samples,
        }),
    )?;
    Ok(vec![csv_path, json_path])
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// `q` is capped at the operator dimension, where the Krylov space is full.
pub fn density_config(spec: &JobSpec, dim: usize) -> DensityConfig {
    DensityConfig { q: spec.q.min(dim), probes: probes(spec), sigma: spec.sigma, grid_points: spec.grid_points }
}

fn density(spec: &JobSpec, target: &Target) -> Result<Vec<std::path::PathBuf>, CliError> {
    let cfg = density_config(spec, target.op.dim());
    let d = slq_density(&target.op, &cfg).map_err(CliError::analysis)?;
    let mut csv = Csv::new(&["t", "phi"]);
    for (t, phi) in d.grid.iter().zip(&d.values) {
        csv.row(&[CsvField::Float(*t), CsvField::Float(*phi)]);
    }
    let csv_path = spec.path("density.csv");
    csv.write(&csv_path)?;
    #[derive(Serialize)]
    struct Run<'a> {
        ritz_values: &'a [f64],
        weights: &'a [f64],
    }
    let runs: Vec<Run> = d.runs.iter().map(|r| Run { ritz_values: &r.ritz_values, weights: &r.weights }).collect();
    let json_path = spec.path("density.json");
    write_json(
        &json_path,
        &json!({
            "command": "density",
            "dim": target.op.dim(),
            "stage": stage_json(spec),
            "seed": spec.seed,
            "sigma": d.sigma,
            "q": cfg.q,
            "n_v": spec.n_v,
            "grid_points": spec.grid_points,
            "integral": d.integral(),
            "runs": runs,
        }),
    )?;
    Ok(vec![csv_path, json_path])
}

fn landscape_cmd(spec: &JobSpec, analysis: &Analysis, target: &Target) -> Result<Vec<std::path::PathBuf>, CliError> {
    if target.op.dim() < 2 {
        return Err(CliError::Usage("landscape needs an operator of dimension at least 2".into()));
    }
    let res = top_pairs(spec, target, 2)?;
    let v1 = target.embed(&res.pairs[0].vector);
    let v2 = target.embed(&res.pairs[1].vector);
    // the slice evaluates the loss on at most K examples
    let objective: Arc<dyn Objective> = match &analysis.network {
        Some(net) => Arc::new(net.with_batch_limit(spec.batch_limit)),
        None => analysis.objective.clone(),
    };
    let grid = landscape(&objective, &analysis.theta, &v1, &v2, spec.eps_range, spec.resolution)
        .map_err(CliError::analysis)?;
    let mut csv = Csv::new(&["eps1", "eps2", "loss"]);
    for (i, e1) in grid.eps1_axis.iter().enumerate() {
        for (j, e2) in grid.eps2_axis.iter().enumerate() {
            csv.row(&[CsvField::Float(*e1), CsvField::Float(*e2), CsvField::Float(grid.losses[i][j])]);
        }
    }
    let csv_path = spec.path("landscape.csv");
    csv.write(&csv_path)?;
    let json_path = spec.path("landscape.json");
    write_json(
        &json_path,
        &json!({
            "command": "landscape",
            "dim": target.op.dim(),
            "stage": stage_json(spec),
            "seed": spec.seed,
            "eps1_axis": grid.eps1_axis,
            "eps2_axis": grid.eps2_axis,
            "base_loss": grid.base_loss,
            "lambda1": res.pairs[0].value,
            "lambda2": res.pairs[1].value,
            "batch_size": grid.batch_size,
            "curvature_eps1": grid.second_difference(0),
            "curvature_eps2": grid.second_difference(1),
        }),
    )?;
    Ok(vec![csv_path, json_path])
}
