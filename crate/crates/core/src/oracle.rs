//! Dense ground truth for desk-scale problems.
//!
//! Everything here is deliberately naive: columns are obtained one product
//! at a time, eigenpairs come from cyclic Jacobi rotations, and Hessian
//! products are checked against central differences of the gradient.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operator::{DenseMatrix, SymmetricOperator};
use crate::spectral::density::{gaussian_pdf, SpectralDensity};
use crate::vector::max_abs;

/// Default upper bound on the dimension [`materialize`] accepts.
pub const DEFAULT_DENSE_CAP: usize = 2000;

/// Environment variable overriding [`DEFAULT_DENSE_CAP`].
pub const DENSE_CAP_ENV: &str = "HESSIAN_SPECTRA_DENSE_CAP";

pub fn dense_cap() -> usize {
    std::env::var(DENSE_CAP_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&c| c > 0)
        .unwrap_or(DEFAULT_DENSE_CAP)
}

#[derive(Debug, Clone)]
pub struct Materialized {
    /// `(M + M^T) / 2`
    pub matrix: DenseMatrix,
    /// `max |M_ij - M_ji|` before symmetrization.
    pub asymmetry: f64,
}

pub fn materialize<O: SymmetricOperator + ?Sized>(op: &O) -> Result<Materialized> {
    materialize_with_cap(op, dense_cap())
}

/// Builds the dense matrix of `op` column by column (`column j = op e_j`).
pub fn materialize_with_cap<O: SymmetricOperator + ?Sized>(op: &O, cap: usize) -> Result<Materialized> {
    let m = op.dim();
    if m > cap {
        return Err(Error::DimensionCap { dim: m, cap });
    }
    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            op.apply(&e)
        })
        .collect();
    let mut raw = DenseMatrix::zeros(m);
    for (j, col) in columns.iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            raw.set(i, j, *x);
        }
    }
    let asymmetry = raw.asymmetry();
    Ok(Materialized { matrix: raw.symmetrized(), asymmetry })
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct FullSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Row-major `m x m`; column `i` is the eigenvector of `eigenvalues[i]`.
    vectors: Vec<f64>,
    dim: usize,
}

impl FullSpectrum {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.vectors[r * self.dim + i]).collect()
    }

    pub fn eigenvectors(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.eigenvector(i)).collect()
    }

    /// Indices sorted by `|lambda|` descending.
    pub fn order_by_magnitude(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.dim).collect();
        idx.sort_by(|&a, &b| self.eigenvalues[b].abs().total_cmp(&self.eigenvalues[a].abs()));
        idx
    }

    /// `Q diag(lambda) Q^T`
    pub fn reconstruct(&self) -> DenseMatrix {
        let m = self.dim;
        let mut a = DenseMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                let v: f64 =
                    (0..m).map(|k| self.vectors[i * m + k] * self.eigenvalues[k] * self.vectors[j * m + k]).sum();
                a.set(i, j, v);
            }
        }
        a
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Symmetry tolerance (entrywise) accepted by [`dense_symmetric_eig`].
pub const SYMMETRY_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// Full eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps continue until the off-diagonal Frobenius mass falls below
/// `1e-12 * |A|_F`.
pub fn dense_symmetric_eig(a: &DenseMatrix) -> Result<FullSpectrum> {
    let m = a.dim();
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::invalid(format!("matrix is not symmetric (max |a_ij - a_ji| = {asym:e})")));
    }
    let mut w = a.symmetrized().entries().to_vec();
    let mut v = DenseMatrix::identity(m).entries().to_vec();
    let fro = a.frobenius_norm();
    let target = 1e-12 * fro;

    let off = |w: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    s += w[i * m + j] * w[i * m + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&w) > target {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = w[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = w[p * m + p];
                let aqq = w[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..m {
                    let arp = w[r * m + p];
                    let arq = w[r * m + q];
                    w[r * m + p] = c * arp - s * arq;
                    w[r * m + q] = s * arp + c * arq;
                }
                for r in 0..m {
                    let apr = w[p * m + r];
                    let aqr = w[q * m + r];
                    w[p * m + r] = c * apr - s * aqr;
                    w[q * m + r] = s * apr + c * aqr;
                }
                w[p * m + q] = 0.0;
                w[q * m + p] = 0.0;
                for r in 0..m {
                    let vrp = v[r * m + p];
                    let vrq = v[r * m + q];
                    v[r * m + p] = c * vrp - s * vrq;
                    v[r * m + q] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| w[i * m + i].total_cmp(&w[j * m + j]));
    let eigenvalues = order.iter().map(|&i| w[i * m + i]).collect();
    let mut vectors = vec![0.0; m * m];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..m {
            vectors[r * m + new] = v[r * m + old];
        }
    }
    Ok(FullSpectrum { eigenvalues, vectors, dim: m })
}

/// The kernel-smoothed spectral density `(1/m) sum_i f(lambda_i; t, sigma)`
/// evaluated on `grid` straight from known eigenvalues.
pub fn exact_density(eigenvalues: &[f64], sigma: f64, grid: &[f64]) -> Result<SpectralDensity> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("kernel width must be positive, got {sigma}")));
    }
    if eigenvalues.is_empty() {
        return Err(Error::invalid("exact density needs at least one eigenvalue"));
    }
    let inv_m = 1.0 / eigenvalues.len() as f64;
    let values =
        grid.iter().map(|&t| inv_m * eigenvalues.iter().map(|&l| gaussian_pdf(l, t, sigma)).sum::<f64>()).collect();
    Ok(SpectralDensity { grid: grid.to_vec(), values, sigma, runs: Vec::new() })
}

/// Default central-difference step for [`fd_hvp`]: `1e-4 * max(1, |theta|_inf)`.
pub fn default_fd_step(theta: &[f64]) -> f64 {
    1e-4 * max_abs(theta).max(1.0)
}

/// `(g(theta + eps v) - g(theta - eps v)) / (2 eps)`.
pub fn fd_hvp<G>(gradient: G, theta: &[f64], v: &[f64], eps: f64) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {eps}")));
    }
    if theta.len() != v.len() {
        return Err(Error::invalid("direction and parameter lengths differ"));
    }
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + eps * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - eps * d).collect();
    let gp = gradient(&plus)?;
    let gm = gradient(&minus)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
}
