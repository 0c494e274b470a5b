//! Stochastic Lanczos quadrature estimate of the smoothed spectral density
//!
//! ```text
//! phi_sigma(t) ~ (1/n_v) sum_l sum_i tau_i^(l) f(lambda_i^(l); t, sigma)
//! ```
//!
//! where each run `l` starts Lanczos from a normalized random probe and
//! `(lambda_i, tau_i)` are the Ritz values and squared first eigenvector
//! components of its tridiagonal matrix.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lanczos::lanczos;
use super::tridiag::{tridiag_eig, SlqRun};
use super::ProbeConfig;
use crate::error::{Error, Result};
use crate::operator::SymmetricOperator;
use crate::rng::{sample_probe, Purpose, Stream};
use crate::vector::normalize;

pub const DEFAULT_GRID_POINTS: usize = 1024;
/// Automatic kernel width as a fraction of the Ritz-value spread.
pub const AUTO_SIGMA_FRACTION: f64 = 0.01;
pub const MIN_SIGMA: f64 = 1e-8;

/// `exp(-(t - lambda)^2 / (2 sigma^2)) / (sigma sqrt(2 pi))` without argument
/// checks.
#[inline]
pub fn gaussian_pdf(lambda: f64, t: f64, sigma: f64) -> f64 {
    let z = (t - lambda) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

pub fn gaussian_kernel(lambda: f64, t: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("kernel width must be positive, got {sigma}")));
    }
    Ok(gaussian_pdf(lambda, t, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    /// `1%` of the Ritz-value spread, floored at [`MIN_SIGMA`].
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityConfig {
    /// Lanczos steps per run.
    pub q: usize,
    pub probes: ProbeConfig,
    pub sigma: Sigma,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralDensity {
    /// Ascending evaluation points.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub sigma: f64,
    /// Per-probe quadrature rules, in probe order. Empty for exact densities.
    pub runs: Vec<SlqRun>,
}

impl SpectralDensity {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// `int t^k phi(t) dt` by the trapezoid rule on the grid.
    pub fn moment(&self, k: i32) -> f64 {
        let weighted: Vec<f64> = self.grid.iter().zip(&self.values).map(|(t, v)| t.powi(k) * v).collect();
        trapezoid(&self.grid, &weighted)
    }

    /// Trapezoid mass of the grid cells lying inside `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for i in 1..self.grid.len() {
            let (a, b) = (self.grid[i - 1], self.grid[i]);
            if a >= lo && b <= hi {
                total += 0.5 * (b - a) * (self.values[i - 1] + self.values[i]);
            }
        }
        total
    }

    pub fn argmax(&self) -> usize {
        self.values.iter().enumerate().fold(0, |best, (i, v)| if *v > self.values[best] { i } else { best })
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
}

/// Estimates the Gaussian-smoothed eigenvalue density of `op` by stochastic
/// Lanczos quadrature.
pub fn slq_density<O: SymmetricOperator + ?Sized>(op: &O, cfg: &DensityConfig) -> Result<SpectralDensity> {
    cfg.probes.validate()?;
    if cfg.grid_points < 2 {
        return Err(Error::invalid("density grid needs at least 2 points"));
    }
    if let Sigma::Fixed(s) = cfg.sigma {
        if !(s > 0.0) {
            return Err(Error::invalid(format!("kernel width must be positive, got {s}")));
        }
    }
    let m = op.dim();
    let runs: Vec<SlqRun> = (0..cfg.probes.count as u64)
        .into_par_iter()
        .map(|l| {
            let mut stream = Stream::new(cfg.probes.seed, Purpose::Lanczos, l);
            let mut start = sample_probe(m, cfg.probes.distribution, &mut stream);
            if normalize(&mut start) == 0.0 {
                return Err(Error::invalid("probe vector is zero"));
            }
            let out = lanczos(op, cfg.q, &start, false)?;
            tridiag_eig(&out.alpha, &out.beta)
        })
        .collect::<Result<_>>()?;
    Ok(density_from_runs(runs, cfg.sigma, cfg.grid_points))
}

/// Builds the grid and evaluates the averaged kernel sum for a set of runs.
pub fn density_from_runs(runs: Vec<SlqRun>, sigma: Sigma, grid_points: usize) -> SpectralDensity {
    let (lo, hi) = runs
        .iter()
        .flat_map(|r| r.ritz_values.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let width = hi - lo;
    let sigma = match sigma {
        Sigma::Auto => (AUTO_SIGMA_FRACTION * width).max(MIN_SIGMA),
        Sigma::Fixed(s) => s,
    };
    let margin = (3.0 * sigma).max(0.01 * width);
    let grid = uniform_grid(lo - margin, hi + margin, grid_points);
    let inv_n = 1.0 / runs.len() as f64;
    let values = grid
        .par_iter()
        .map(|&t| {
            let total: f64 = runs
                .iter()
                .map(|r| {
                    r.ritz_values.iter().zip(&r.weights).map(|(&l, &w)| w * gaussian_pdf(l, t, sigma)).sum::<f64>()
                })
                .sum();
            inv_n * total
        })
        .collect();
    SpectralDensity { grid, values, sigma, runs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DenseMatrix, DiagonalOperator};

    fn cfg(q: usize, n_v: usize, seed: u64) -> DensityConfig {
        DensityConfig { q, probes: ProbeConfig::rademacher(n_v, seed), sigma: Sigma::Auto, grid_points: 1024 }
    }

    #[test]
    fn kernel_values() {
        let peak = gaussian_kernel(0.3, 0.3, 1.0).unwrap();
        assert!((peak - 0.398_942_280_4).abs() < 1e-10);
        let one_sigma = gaussian_kernel(1.0, 1.0 + 0.25, 0.25).unwrap();
        let peak = gaussian_kernel(1.0, 1.0, 0.25).unwrap();
        assert!((one_sigma - peak * (-0.5f64).exp()).abs() < 1e-14);
        assert!(gaussian_kernel(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_kernel(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn kernel_integrates_to_one() {
        let (lambda, sigma) = (0.7, 0.3);
        let grid = uniform_grid(lambda - 8.0 * sigma, lambda + 8.0 * sigma, 1000);
        let vals: Vec<f64> = grid.iter().map(|&t| gaussian_kernel(lambda, t, sigma).unwrap()).collect();
        assert!((trapezoid(&grid, &vals) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaled_identity_single_bump() {
        let c = 2.5;
        let d = slq_density(&DenseMatrix::diagonal(&[c; 40]), &cfg(5, 4, 1)).unwrap();
        let step = d.grid[1] - d.grid[0];
        assert!((d.grid[d.argmax()] - c).abs() <= step);
        assert!((d.integral() - 1.0).abs() < 5e-3);
        assert!(d.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn two_point_spectrum_splits_mass() {
        let mut diag = vec![-1.0; 50];
        diag.extend([1.0; 50]);
        let d = slq_density(&DiagonalOperator::new(diag).unwrap(), &cfg(10, 20, 2)).unwrap();
        let neg = d.mass_between(f64::NEG_INFINITY, 0.0);
        let pos = d.mass_between(0.0, f64::INFINITY);
        assert!((0.45..=0.55).contains(&neg), "{neg}");
        assert!((0.45..=0.55).contains(&pos), "{pos}");
        assert!((d.integral() - 1.0).abs() < 5e-3);
    }

    #[test]
    fn weights_sum_to_one_per_run() {
        let op = crate::testing::random_symmetric(60, 3);
        let d = slq_density(&op, &cfg(20, 6, 4)).unwrap();
        assert_eq!(d.runs.len(), 6);
        for run in &d.runs {
            assert!((run.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(run.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn fixed_sigma_and_errors() {
        let op = DenseMatrix::identity(3);
        let mut c = cfg(2, 2, 0);
        c.sigma = Sigma::Fixed(0.5);
        assert_eq!(slq_density(&op, &c).unwrap().sigma, 0.5);
        c.sigma = Sigma::Fixed(0.0);
        assert!(slq_density(&op, &c).is_err());
        c.sigma = Sigma::Auto;
        c.grid_points = 1;
        assert!(slq_density(&op, &c).is_err());
        assert!(slq_density(&op, &cfg(4, 2, 0)).is_err());
    }
}
