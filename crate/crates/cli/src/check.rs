//! The `check` command: estimator and derivative self-tests against the dense
//! oracle on the configured model.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use hessian_spectra::nn::{gradient, hvp, loss};
use hessian_spectra::operator::symmetry_defect;
use hessian_spectra::oracle::{default_fd_step, dense_cap, dense_symmetric_eig, fd_hvp, materialize};
use hessian_spectra::rng::{sample_probe, ProbeDistribution, Purpose, Stream};
use hessian_spectra::spectral::{hutchinson_trace, slq_density, ProbeConfig};
use hessian_spectra::vector::{max_abs, norm, normalize, sub};
use hessian_spectra::SymmetricOperator;

use crate::config::Analysis;
use crate::error::CliError;
use crate::job::JobSpec;
use crate::output::{write_json, write_text};
use crate::run::{density_config, top_pairs, Target};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// `None` when the check was skipped.
    pub passed: Option<bool>,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl CheckResult {
    fn measured(name: &'static str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name,
            passed: Some(value <= threshold),
            value: Some(value),
            threshold: Some(threshold),
            detail: detail.into(),
        }
    }

    fn skipped(name: &'static str, detail: impl Into<String>) -> Self {
        CheckResult { name, passed: None, value: None, threshold: None, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        let status = match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        match (self.value, self.threshold) {
            (Some(v), Some(t)) => format!("{status} {}: {v:.3e} <= {t:.1e} ({})", self.name, self.detail),
            _ => format!("{status} {}: {}", self.name, self.detail),
        }
    }
}

fn unit_direction(m: usize, seed: u64, i: u64) -> Vec<f64> {
    let mut s = Stream::new(seed, Purpose::Other(2), i);
    let mut v = sample_probe(m, ProbeDistribution::Gaussian, &mut s);
    normalize(&mut v);
    v
}

pub fn checks(spec: &JobSpec, analysis: &Analysis, target: &Target) -> Result<Vec<CheckResult>, CliError> {
    let obj = &analysis.objective;
    let theta = &analysis.theta;
    let m_full = theta.len();
    let mut out = Vec::new();

    // gradient against central differences of the loss
    let g = gradient(obj, theta).map_err(CliError::analysis)?;
    let eps = 1e-5;
    let mut p = theta.clone();
    let mut worst = 0.0f64;
    for i in 0..m_full {
        let x = theta[i];
        p[i] = x + eps;
        let up = loss(obj, &p).map_err(CliError::analysis)?;
        p[i] = x - eps;
        let down = loss(obj, &p).map_err(CliError::analysis)?;
        p[i] = x;
        worst = worst.max((g[i] - (up - down) / (2.0 * eps)).abs());
    }
    let scale = max_abs(&g).max(1.0);
    out.push(CheckResult::measured(
        "gradient_vs_fd",
        worst / scale,
        1e-6,
        format!("max coordinate error over max(|g|_inf, 1), {m_full} coordinates"),
    ));

    // Hessian products against central differences of the gradient
    let step = default_fd_step(theta);
    let mut worst = 0.0f64;
    for i in 0..5 {
        let v = unit_direction(m_full, spec.seed, i);
        let exact = hvp(obj, theta, &v).map_err(CliError::analysis)?;
        let approx = fd_hvp(|t| gradient(obj, t), theta, &v, step).map_err(CliError::analysis)?;
        let err = norm(&sub(&exact, &approx)) / norm(&exact).max(1e-12);
        worst = worst.max(err);
    }
    out.push(CheckResult::measured("hvp_vs_fd", worst, 1e-4, "relative L2 over 5 unit directions"));

    let op = &target.op;
    let m = op.dim();
    out.push(CheckResult::measured(
        "hvp_symmetry",
        symmetry_defect(op, 100, spec.seed),
        1e-8,
        "worst relative |v1.Hv2 - v2.Hv1| over 100 pairs",
    ));

    let cap = dense_cap();
    if m > cap {
        for name in ["materialize_symmetry", "top_eigenpairs", "hutchinson", "slq_density", "block_traces"] {
            out.push(CheckResult::skipped(name, format!("dimension {m} exceeds the dense cap {cap}")));
        }
        return Ok(out);
    }

    let mat = materialize(op).map_err(CliError::analysis)?;
    out.push(CheckResult::measured("materialize_symmetry", mat.asymmetry, 1e-8, "max |M_ij - M_ji|"));
    let a = mat.matrix;
    let spectrum = dense_symmetric_eig(&a).map_err(CliError::analysis)?;
    let exact_trace = a.trace();

    let k = spec.top_k.min(m);
    let order = spectrum.order_by_magnitude();
    if let Some(tie) = sign_tie(&spectrum.eigenvalues, &order, k) {
        out.push(CheckResult::skipped(
            "top_eigenpairs",
            format!(
                "|lambda| = {tie} is shared by eigenvalues of both signs; power iteration has no dominant direction"
            ),
        ));
    } else {
        let res = top_pairs(spec, target, k)?;
        let worst = res
            .pairs
            .iter()
            .zip(&order)
            .map(|(p, &i)| {
                let want = spectrum.eigenvalues[i];
                (p.value - want).abs() / want.abs().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        out.push(CheckResult::measured("top_eigenpairs", worst, 1e-6, format!("k = {k}, relative error by |lambda|")));
    }

    let probes = ProbeConfig { distribution: spec.distribution, seed: spec.seed, count: spec.n_v };
    let est = hutchinson_trace(op, &probes).map_err(CliError::analysis)?;
    let gap = (est.mean - exact_trace).abs();
    let check = if est.stderr > 0.0 {
        CheckResult::measured(
            "hutchinson",
            gap / est.stderr,
            4.0,
            format!("|mean - trace| in standard errors, n_v = {}", spec.n_v),
        )
    } else {
        // zero spread (diagonal operator, or a single probe): demand exactness
        CheckResult::measured(
            "hutchinson",
            gap / exact_trace.abs().max(1.0),
            1e-12,
            "zero-variance samples, relative error",
        )
    };
    out.push(check);

    let d = slq_density(op, &density_config(spec, m)).map_err(CliError::analysis)?;
    let (lo, hi) = (spectrum.eigenvalues[0], spectrum.eigenvalues[m - 1]);
    let slack = 1e-8 * lo.abs().max(hi.abs()).max(1.0);
    let escaped =
        d.runs.iter().flat_map(|r| r.ritz_values.iter()).map(|&r| (lo - r).max(r - hi).max(0.0)).fold(0.0, f64::max);
    out.push(CheckResult::measured("slq_ritz_bounds", escaped, slack, "Ritz values outside the true spectral range"));
    out.push(CheckResult::measured("slq_normalization", (d.integral() - 1.0).abs(), 5e-3, "|integral - 1|"));

    let layout = op.layout().cloned();
    match layout {
        Some(layout) if layout.segments().len() > 1 => {
            let total: f64 = layout.segments().iter().map(|s| s.range().map(|i| a.get(i, i)).sum::<f64>()).sum();
            let err = (total - exact_trace).abs() / exact_trace.abs().max(1.0);
            out.push(CheckResult::measured(
                "block_traces",
                err,
                1e-8,
                format!("sum of {} block traces against the full trace", layout.segments().len()),
            ));
        }
        _ => out.push(CheckResult::skipped("block_traces", "single block")),
    }
    Ok(out)
}

/// A magnitude among the top `k` that is shared, to within `1e-6` relative,
/// by a positive and a negative eigenvalue.
fn sign_tie(eigenvalues: &[f64], order: &[usize], k: usize) -> Option<f64> {
    order[..k].iter().map(|&i| eigenvalues[i].abs()).find(|&mag| {
        let tied = |sign: f64| eigenvalues.iter().any(|&l| l * sign > 0.0 && (l.abs() - mag).abs() <= 1e-6 * mag);
        mag > 0.0 && tied(1.0) && tied(-1.0)
    })
}

pub fn run_checks(spec: &JobSpec, analysis: &Analysis, target: &Target) -> Result<Vec<PathBuf>, CliError> {
    let results = checks(spec, analysis, target)?;
    let failed = results.iter().filter(|r| r.passed == Some(false)).count();
    let mut report = String::new();
    for r in &results {
        report.push_str(&r.line());
        report.push('\n');
    }
    let txt = spec.path("check.txt");
    write_text(&txt, &report)?;
    let json_path = spec.path("check.json");
    write_json(
        &json_path,
        &json!({
            "command": "check",
            "dim": target.op.dim(),
            "stage": spec.stage,
            "seed": spec.seed,
            "passed": failed == 0,
            "checks": results,
        }),
    )?;
    print!("{report}");
    if failed > 0 {
        return Err(CliError::Analysis(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(vec![txt, json_path])
}
