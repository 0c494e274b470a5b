use rayon::prelude::*;
use serde::Serialize;

use super::ProbeConfig;
use crate::error::Result;
use crate::operator::SymmetricOperator;
use crate::rng::{sample_probe, Purpose, Stream};
use crate::vector::dot;

/// Running Hutchinson statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEstimate {
    /// `v_i^T H v_i` in probe order.
    pub samples: Vec<f64>,
    pub mean: f64,
    /// `running_means[i]` averages `samples[..=i]`.
    pub running_means: Vec<f64>,
    /// Standard error of `running_means[i]`; NaN for a single sample.
    pub running_stderr: Vec<f64>,
    /// Sample standard deviation over `sqrt(n_v)`; NaN when `n_v = 1`.
    pub stderr: f64,
}

impl TraceEstimate {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let mut running_means = Vec::with_capacity(samples.len());
        let mut running_stderr = Vec::with_capacity(samples.len());
        let mut sum = 0.0;
        // Welford accumulators for the variance
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let n = (i + 1) as f64;
            sum += x;
            let delta = x - mean;
            mean += delta / n;
            m2 += delta * (x - mean);
            running_means.push(sum / n);
            running_stderr.push(if i == 0 { f64::NAN } else { (m2 / (n - 1.0)).sqrt() / n.sqrt() });
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let stderr = *running_stderr.last().unwrap_or(&f64::NAN);
        TraceEstimate { samples, mean, running_means, running_stderr, stderr }
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }
}

/// Estimates `Tr(op)` as the average of `v^T op v` over `probes.count`
/// independent probes.
pub fn hutchinson_trace<O: SymmetricOperator + ?Sized>(op: &O, probes: &ProbeConfig) -> Result<TraceEstimate> {
    probes.validate()?;
    let m = op.dim();
    let samples: Vec<f64> = (0..probes.count as u64)
        .into_par_iter()
        .map(|i| {
            let mut stream = Stream::new(probes.seed, Purpose::Hutchinson, i);
            let v = sample_probe(m, probes.distribution, &mut stream);
            dot(&v, &op.apply(&v))
        })
        .collect();
    Ok(TraceEstimate::from_samples(samples))
}
