//! Top-k eigenpairs by power iteration on successively deflated operators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{deflate, SymmetricOperator};
use crate::rng::{sample_probe, ProbeDistribution, Purpose, Stream};
use crate::vector::{dot, norm, normalize, orthogonalize_against};

const MAX_START_RETRIES: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    /// Relative tolerance on both the Rayleigh-quotient change between
    /// iterates and the residual `|H u - lambda u| / |lambda|`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig { tol: 1e-6, max_iter: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub value: f64,
    /// Unit norm.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `|H u - lambda u|` on the deflated operator the pair was accepted on.
    pub residual: f64,
    /// False when `max_iter` ran out first.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenResult {
    /// Ordered by `|value|` descending.
    pub pairs: Vec<EigenPair>,
}

impl EigenResult {
    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.pairs.iter().map(|p| p.vector.clone()).collect()
    }
}

/// The `k` eigenpairs of `op` of largest magnitude.
///
/// Pair `j` is found by power iteration on `P H P`, where `P` projects out
/// the pairs already accepted. Iteration stops once the Rayleigh quotient
/// changes by less than `tol` (relative) *and* the relative residual is below
/// `tol`, or after `max_iter` products. When eigenvalues repeat, the returned
/// vectors span the right eigenspace but are otherwise arbitrary within it.
pub fn top_eigenpairs<O: SymmetricOperator + ?Sized>(op: &O, k: usize, cfg: &PowerConfig) -> Result<EigenResult> {
    let m = op.dim();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={m}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", cfg.tol)));
    }
    if cfg.max_iter == 0 {
        return Err(Error::invalid("max_iter must be positive"));
    }

    let mut pairs: Vec<EigenPair> = Vec::with_capacity(k);
    for j in 0..k {
        let accepted: Vec<Vec<f64>> = pairs.iter().map(|p| p.vector.clone()).collect();
        let deflated = deflate(op, &accepted)?;
        let start = start_vector(m, j as u64, cfg.seed, deflated.basis())?;
        let mut pair = power_iterate(&deflated, start, cfg);
        // keep the accepted set orthonormal to rounding
        orthogonalize_against(&mut pair.vector, deflated.basis());
        normalize(&mut pair.vector);
        pairs.push(pair);
    }
    pairs.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
    Ok(EigenResult { pairs })
}

fn start_vector(m: usize, index: u64, seed: u64, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    for attempt in 0..MAX_START_RETRIES {
        let mut stream = Stream::new(seed, Purpose::PowerIteration, index * MAX_START_RETRIES + attempt);
        // Gaussian rather than Rademacher: sign vectors can cancel a repeated
        // eigenspace exactly after projection
        let mut v = sample_probe(m, ProbeDistribution::Gaussian, &mut stream);
        orthogonalize_against(&mut v, basis);
        orthogonalize_against(&mut v, basis);
        // a projected Gaussian vector has norm ~ sqrt(m - |basis|)
        if normalize(&mut v) > 1e-8 {
            return Ok(v);
        }
    }
    Err(Error::PowerIteration(format!(
        "start vector {index} vanished after projection in {MAX_START_RETRIES} attempts"
    )))
}

fn power_iterate<O: SymmetricOperator + ?Sized>(op: &O, mut v: Vec<f64>, cfg: &PowerConfig) -> EigenPair {
    let mut hv = op.apply(&v);
    let mut lambda = dot(&v, &hv);
    let mut residual = residual_norm(&hv, &v, lambda);
    for it in 1..=cfg.max_iter {
        let n = norm(&hv);
        if n == 0.0 {
            // v lies in the null space: an exact eigenpair with value 0
            return EigenPair { value: 0.0, vector: v, iterations: it, residual: 0.0, converged: true };
        }
        v = hv.iter().map(|x| x / n).collect();
        hv = op.apply(&v);
        let next = dot(&v, &hv);
        residual = residual_norm(&hv, &v, next);
        let change = (next - lambda).abs() / next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if change < cfg.tol && residual <= cfg.tol * lambda.abs() {
            return EigenPair { value: lambda, vector: v, iterations: it, residual, converged: true };
        }
    }
    EigenPair { value: lambda, vector: v, iterations: cfg.max_iter, residual, converged: false }
}

fn residual_norm(hv: &[f64], v: &[f64], lambda: f64) -> f64 {
    hv.iter().zip(v).map(|(h, x)| (h - lambda * x).powi(2)).sum::<f64>().sqrt()
}
