//! Python bindings.
//!
//! `Model` wraps a run configuration (the same JSON the command-line tool
//! reads) and exposes loss, gradient, Hessian-vector products and the
//! spectral estimators. The module-level functions run the estimators on a
//! dense symmetric matrix given as a list of rows.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hessian_spectra_cli::config::Analysis;
use hessian_spectra_cli::run::Target;
use hessian_spectra_cli::{CliError, RunConfig};
use spectra::landscape::landscape;
use spectra::nn::{self, Objective};
use spectra::oracle::dense_symmetric_eig;
use spectra::rng::ProbeDistribution;
use spectra::spectral::{
    hutchinson_trace, slq_density, top_eigenpairs, DensityConfig, EigenResult, PowerConfig, ProbeConfig, Sigma,
    SpectralDensity, TraceEstimate,
};
use spectra::{DenseMatrix, SymmetricOperator};

fn core_err(e: spectra::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Usage(m) | CliError::Config(m) => PyValueError::new_err(m),
        CliError::Analysis(m) | CliError::Io(m) => PyRuntimeError::new_err(m),
    }
}

fn distribution(name: &str) -> PyResult<ProbeDistribution> {
    match name {
        "rademacher" => Ok(ProbeDistribution::Rademacher),
        "gaussian" => Ok(ProbeDistribution::Gaussian),
        _ => Err(PyValueError::new_err(format!("unknown distribution {name:?}"))),
    }
}

fn sigma(value: Option<f64>) -> PyResult<Sigma> {
    match value {
        None => Ok(Sigma::Auto),
        Some(s) if s > 0.0 => Ok(Sigma::Fixed(s)),
        Some(s) => Err(PyValueError::new_err(format!("sigma must be positive, got {s}"))),
    }
}

fn eig_to_py<'py>(py: Python<'py>, res: EigenResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("values", res.values())?;
    d.set_item("residuals", res.pairs.iter().map(|p| p.residual).collect::<Vec<_>>())?;
    d.set_item("converged", res.pairs.iter().map(|p| p.converged).collect::<Vec<_>>())?;
    d.set_item("vectors", res.vectors())?;
    Ok(d)
}

fn trace_to_py<'py>(py: Python<'py>, est: TraceEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("estimate", est.mean)?;
    d.set_item("stderr", est.stderr)?;
    d.set_item("samples", est.samples)?;
    d.set_item("running_means", est.running_means)?;
    Ok(d)
}

fn density_to_py<'py>(py: Python<'py>, dens: SpectralDensity) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("integral", dens.integral())?;
    d.set_item("sigma", dens.sigma)?;
    d.set_item("grid", dens.grid)?;
    d.set_item("values", dens.values)?;
    let ritz: Vec<Vec<f64>> = dens.runs.iter().map(|r| r.ritz_values.clone()).collect();
    let weights: Vec<Vec<f64>> = dens.runs.iter().map(|r| r.weights.clone()).collect();
    d.set_item("ritz_values", ritz)?;
    d.set_item("weights", weights)?;
    Ok(d)
}

fn probes(n_v: usize, seed: u64, dist: &str) -> PyResult<ProbeConfig> {
    Ok(ProbeConfig { distribution: distribution(dist)?, seed, count: n_v })
}

fn density_config(
    q: usize,
    dim: usize,
    n_v: usize,
    seed: u64,
    s: Option<f64>,
    grid_points: usize,
    dist: &str,
) -> PyResult<DensityConfig> {
    Ok(DensityConfig { q: q.min(dim), probes: probes(n_v, seed, dist)?, sigma: sigma(s)?, grid_points })
}

/// A model and the parameter point its Hessian is analysed at.
#[pyclass(module = "hessian_spectra", frozen)]
struct Model {
    analysis: Analysis,
}

impl Model {
    fn theta_or_own(&self, theta: Option<Vec<f64>>) -> Vec<f64> {
        theta.unwrap_or_else(|| self.analysis.theta.clone())
    }

    fn target(&self, stage: Option<Vec<String>>) -> PyResult<Target> {
        Target::new(&self.analysis, stage.as_deref()).map_err(cli_err)
    }
}

#[pymethods]
impl Model {
    /// Builds (and trains, if the config says so) from a JSON string.
    #[staticmethod]
    fn from_json(py: Python<'_>, text: &str) -> PyResult<Self> {
        let config = RunConfig::parse(text).map_err(cli_err)?;
        let analysis = py.detach(|| config.build()).map_err(cli_err)?;
        Ok(Model { analysis })
    }

    #[staticmethod]
    fn from_file(py: Python<'_>, path: std::path::PathBuf) -> PyResult<Self> {
        let config = RunConfig::load(&path).map_err(cli_err)?;
        let analysis = py.detach(|| config.build()).map_err(cli_err)?;
        Ok(Model { analysis })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.analysis.dim()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.analysis.theta.clone()
    }

    /// `(name, length)` for each parameter block, in layout order.
    #[getter]
    fn blocks(&self) -> Vec<(String, usize)> {
        self.analysis.layout().segments().iter().map(|s| (s.name.clone(), s.len)).collect()
    }

    #[getter]
    fn train_losses(&self) -> Option<Vec<f64>> {
        self.analysis.train_losses.clone()
    }

    #[pyo3(signature = (theta=None))]
    fn loss(&self, theta: Option<Vec<f64>>) -> PyResult<f64> {
        nn::loss(&self.analysis.objective, &self.theta_or_own(theta)).map_err(core_err)
    }

    #[pyo3(signature = (theta=None))]
    fn gradient(&self, theta: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        nn::gradient(&self.analysis.objective, &self.theta_or_own(theta)).map_err(core_err)
    }

    #[pyo3(signature = (v, theta=None))]
    fn hvp(&self, v: Vec<f64>, theta: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        nn::hvp(&self.analysis.objective, &self.theta_or_own(theta), &v).map_err(core_err)
    }

    #[pyo3(signature = (k=2, tol=1e-6, max_iter=1000, seed=0, stage=None))]
    fn top_eigenpairs<'py>(
        &self,
        py: Python<'py>,
        k: usize,
        tol: f64,
        max_iter: usize,
        seed: u64,
        stage: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let target = self.target(stage)?;
        let res =
            py.detach(|| top_eigenpairs(&target.op, k, &PowerConfig { tol, max_iter, seed })).map_err(core_err)?;
        eig_to_py(py, res)
    }

    #[pyo3(signature = (n_v=100, seed=0, distribution="rademacher", stage=None))]
    fn trace<'py>(
        &self,
        py: Python<'py>,
        n_v: usize,
        seed: u64,
        distribution: &str,
        stage: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let target = self.target(stage)?;
        let cfg = probes(n_v, seed, distribution)?;
        let est = py.detach(|| hutchinson_trace(&target.op, &cfg)).map_err(core_err)?;
        trace_to_py(py, est)
    }

    #[pyo3(signature = (q=80, n_v=100, seed=0, sigma=None, grid_points=1024, distribution="rademacher", stage=None))]
    #[allow(clippy::too_many_arguments)]
    fn density<'py>(
        &self,
        py: Python<'py>,
        q: usize,
        n_v: usize,
        seed: u64,
        sigma: Option<f64>,
        grid_points: usize,
        distribution: &str,
        stage: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let target = self.target(stage)?;
        let cfg = density_config(q, target.op.dim(), n_v, seed, sigma, grid_points, distribution)?;
        let d = py.detach(|| slq_density(&target.op, &cfg)).map_err(core_err)?;
        density_to_py(py, d)
    }

    /// Loss over a grid spanned by the top two Hessian eigenvectors.
    #[pyo3(signature = (half_width=0.5, resolution=41, seed=0, tol=1e-6, max_iter=1000, batch_limit=4096))]
    #[allow(clippy::too_many_arguments)]
    fn landscape<'py>(
        &self,
        py: Python<'py>,
        half_width: f64,
        resolution: usize,
        seed: u64,
        tol: f64,
        max_iter: usize,
        batch_limit: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let target = self.target(None)?;
        let a = &self.analysis;
        let (res, grid) = py
            .detach(|| {
                let res = top_eigenpairs(&target.op, 2, &PowerConfig { tol, max_iter, seed })?;
                let objective: Arc<dyn Objective> = match &a.network {
                    Some(net) => Arc::new(net.with_batch_limit(batch_limit)),
                    None => a.objective.clone(),
                };
                let (v1, v2) = (&res.pairs[0].vector, &res.pairs[1].vector);
                let grid = landscape(&objective, &a.theta, v1, v2, (-half_width, half_width), resolution)?;
                Ok::<_, spectra::Error>((res, grid))
            })
            .map_err(core_err)?;
        let d = PyDict::new(py);
        d.set_item("eps1", &grid.eps1_axis)?;
        d.set_item("eps2", &grid.eps2_axis)?;
        d.set_item("base_loss", grid.base_loss)?;
        d.set_item("curvature", (grid.second_difference(0), grid.second_difference(1)))?;
        d.set_item("eigenvalues", res.values())?;
        d.set_item("losses", grid.losses)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Model(dim={}, blocks={:?})", self.dim(), self.analysis.layout().names())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    let m = DenseMatrix::from_rows(&rows).map_err(core_err)?;
    if m.asymmetry() > 1e-12 * m.max_abs().max(1.0) {
        return Err(PyValueError::new_err("matrix is not symmetric"));
    }
    Ok(m)
}

/// Dense eigendecomposition: ascending eigenvalues and matching eigenvectors.
#[pyfunction]
fn eigh(rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let spec = dense_symmetric_eig(&matrix(rows)?).map_err(core_err)?;
    Ok((spec.eigenvalues.clone(), spec.eigenvectors()))
}

#[pyfunction]
#[pyo3(signature = (rows, k=2, tol=1e-6, max_iter=1000, seed=0))]
fn matrix_top_eigenpairs<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let a = matrix(rows)?;
    let res = top_eigenpairs(&a, k, &PowerConfig { tol, max_iter, seed }).map_err(core_err)?;
    eig_to_py(py, res)
}

#[pyfunction]
#[pyo3(signature = (rows, n_v=100, seed=0, distribution="rademacher"))]
fn matrix_trace<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    n_v: usize,
    seed: u64,
    distribution: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let a = matrix(rows)?;
    let est = hutchinson_trace(&a, &probes(n_v, seed, distribution)?).map_err(core_err)?;
    trace_to_py(py, est)
}

#[pyfunction]
#[pyo3(signature = (rows, q=80, n_v=100, seed=0, sigma=None, grid_points=1024, distribution="rademacher"))]
#[allow(clippy::too_many_arguments)]
fn matrix_density<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    q: usize,
    n_v: usize,
    seed: u64,
    sigma: Option<f64>,
    grid_points: usize,
    distribution: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let a = matrix(rows)?;
    let cfg = density_config(q, a.dim(), n_v, seed, sigma, grid_points, distribution)?;
    let d = slq_density(&a, &cfg).map_err(core_err)?;
    density_to_py(py, d)
}

#[pymodule]
#[pyo3(name = "hessian_spectra")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(eigh, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_top_eigenpairs, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_trace, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_density, m)?)?;
    Ok(())
}
