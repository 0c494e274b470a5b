//! Synthetic desk-scale datasets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, Stream};

/// `N` input/target rows, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
    output_dim: usize,
    len: usize,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("batch needs at least one row"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "batch has {} input rows but {} target rows",
                inputs.len(),
                targets.len()
            )));
        }
        let input_dim = inputs[0].len();
        let output_dim = targets[0].len();
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::invalid("batch rows must be non-empty"));
        }
        if inputs.iter().any(|r| r.len() != input_dim) || targets.iter().any(|r| r.len() != output_dim) {
            return Err(Error::invalid("batch rows have inconsistent lengths"));
        }
        let len = inputs.len();
        Ok(Batch { inputs: inputs.concat(), targets: targets.concat(), input_dim, output_dim, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Row-major `N x input_dim`.
    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Row-major `N x output_dim`.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }

    /// The first `k` rows (all of them if the batch is smaller).
    pub fn truncated(&self, k: usize) -> Batch {
        let len = self.len.min(k.max(1));
        Batch {
            inputs: self.inputs[..len * self.input_dim].to_vec(),
            targets: self.targets[..len * self.output_dim].to_vec(),
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            len,
        }
    }

    /// True when every target row is a probability vector.
    pub fn targets_are_distributions(&self) -> bool {
        (0..self.len).all(|i| {
            let row = self.target_row(i);
            row.iter().all(|&y| y >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Two isotropic Gaussian blobs in the plane, one-hot over 2 classes.
    TwoGaussians,
    /// A disc inside an annulus, one-hot over 2 classes.
    Ring,
    /// `y = x W + b + noise`, with `W`, `b` drawn from the seed.
    LinearRegression,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_gaussians" => Ok(DatasetKind::TwoGaussians),
            "ring" => Ok(DatasetKind::Ring),
            "linear_regression" => Ok(DatasetKind::LinearRegression),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Only used by `linear_regression` (default 3).
    #[serde(default)]
    pub input_dim: Option<usize>,
    /// Only used by `linear_regression` (default 1).
    #[serde(default)]
    pub output_dim: Option<usize>,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, n: usize, noise: f64, seed: u64) -> Self {
        DatasetSpec { kind, n, noise, seed, input_dim: None, output_dim: None }
    }

    pub fn generate(&self) -> Result<Batch> {
        make_dataset_with_dims(self.kind, self.n, self.noise, self.seed, self.input_dim, self.output_dim)
    }
}

pub fn make_dataset(kind: DatasetKind, n: usize, noise: f64, seed: u64) -> Result<Batch> {
    make_dataset_with_dims(kind, n, noise, seed, None, None)
}

fn make_dataset_with_dims(
    kind: DatasetKind,
    n: usize,
    noise: f64,
    seed: u64,
    input_dim: Option<usize>,
    output_dim: Option<usize>,
) -> Result<Batch> {
    if n < 2 {
        return Err(Error::invalid(format!("dataset needs at least 2 rows, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::invalid(format!("noise must be non-negative, got {noise}")));
    }
    let mut s = Stream::new(seed, Purpose::Dataset, 0);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    match kind {
        DatasetKind::TwoGaussians => {
            for i in 0..n {
                let class = i % 2;
                let cx = if class == 0 { -1.5 } else { 1.5 };
                xs.push(vec![cx + noise * s.normal(), noise * s.normal()]);
                ys.push(one_hot(class, 2));
            }
        }
        DatasetKind::Ring => {
            for i in 0..n {
                let class = i % 2;
                let radius = if class == 0 { s.uniform() } else { 2.0 + 0.5 * s.uniform() };
                let angle = 2.0 * PI * s.uniform();
                xs.push(vec![radius * angle.cos() + noise * s.normal(), radius * angle.sin() + noise * s.normal()]);
                ys.push(one_hot(class, 2));
            }
        }
        DatasetKind::LinearRegression => {
            let d_in = input_dim.unwrap_or(3);
            let d_out = output_dim.unwrap_or(1);
            if d_in == 0 || d_out == 0 {
                return Err(Error::invalid("regression dimensions must be positive"));
            }
            let w: Vec<f64> = (0..d_in * d_out).map(|_| s.normal()).collect();
            let b: Vec<f64> = (0..d_out).map(|_| 0.5 * s.normal()).collect();
            for _ in 0..n {
                let x: Vec<f64> = (0..d_in).map(|_| s.normal()).collect();
                let y: Vec<f64> = (0..d_out)
                    .map(|o| {
                        let clean: f64 = b[o] + (0..d_in).map(|k| x[k] * w[k * d_out + o]).sum::<f64>();
                        clean + noise * s.normal()
                    })
                    .collect();
                xs.push(x);
                ys.push(y);
            }
        }
    }
    Batch::new(xs, ys)
}

fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        for kind in [DatasetKind::TwoGaussians, DatasetKind::Ring, DatasetKind::LinearRegression] {
            assert_eq!(make_dataset(kind, 40, 0.3, 5).unwrap(), make_dataset(kind, 40, 0.3, 5).unwrap());
            assert_ne!(make_dataset(kind, 40, 0.3, 5).unwrap(), make_dataset(kind, 40, 0.3, 6).unwrap());
        }
    }

    #[test]
    fn classification_targets_are_one_hot() {
        let b = make_dataset(DatasetKind::Ring, 30, 0.1, 1).unwrap();
        assert!(b.targets_are_distributions());
        assert_eq!((b.input_dim(), b.output_dim(), b.len()), (2, 2, 30));
    }

    #[test]
    fn errors() {
        assert!(make_dataset(DatasetKind::Ring, 1, 0.1, 1).is_err());
        assert!(make_dataset(DatasetKind::Ring, 10, -1.0, 1).is_err());
        assert!("spiral".parse::<DatasetKind>().is_err());
        assert_eq!("ring".parse::<DatasetKind>().unwrap(), DatasetKind::Ring);
        assert!(Batch::new(vec![vec![1.0]], vec![]).is_err());
        assert!(Batch::new(vec![vec![1.0], vec![1.0, 2.0]], vec![vec![0.0], vec![0.0]]).is_err());
    }

    #[test]
    fn truncation() {
        let b = make_dataset(DatasetKind::TwoGaussians, 10, 0.2, 3).unwrap();
        let t = b.truncated(4);
        assert_eq!(t.len(), 4);
        assert_eq!(t.input_row(3), b.input_row(3));
        assert_eq!(b.truncated(100), b);
    }
}
