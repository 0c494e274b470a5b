//! Seeded random matrices for tests, the `check` command and benchmarks.

use crate::error::Result;
use crate::nn::{init_params, Activation, DatasetKind, DatasetSpec, LossKind, ModelConfig, Network, ParamVector};
use crate::operator::{gram_schmidt, DenseMatrix};
use crate::rng::{Purpose, Stream};

const FIXTURE: Purpose = Purpose::Other(77);

/// Wigner-type symmetric matrix: `(G + G^T) / (2 sqrt(m))` with standard
/// normal `G`. Spectrum roughly semicircular on `[-sqrt(2), sqrt(2)]`.
pub fn random_symmetric(m: usize, seed: u64) -> DenseMatrix {
    let mut s = Stream::new(seed, FIXTURE, 0);
    let g: Vec<f64> = (0..m * m).map(|_| s.normal()).collect();
    let scale = 0.5 / (m as f64).sqrt();
    let mut a = DenseMatrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            a.set(i, j, scale * (g[i * m + j] + g[j * m + i]));
        }
    }
    a
}

/// Haar-ish random orthogonal matrix; rows are the orthonormal vectors.
pub fn random_orthogonal(m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = Stream::new(seed, FIXTURE, 1);
    let raw: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| s.normal()).collect()).collect();
    gram_schmidt(&raw)
}

/// `Q diag(eigenvalues) Q^T` for a random orthogonal `Q`.
pub fn with_spectrum(eigenvalues: &[f64], seed: u64) -> DenseMatrix {
    let m = eigenvalues.len();
    let q = random_orthogonal(m, seed);
    let mut a = DenseMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = (0..m).map(|k| q[k][i] * eigenvalues[k] * q[k][j]).sum();
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

/// A spectrum shaped like a trained-network Hessian: a bulk of small
/// eigenvalues of both signs and a handful of separated positive outliers.
pub fn spiked_spectrum(m: usize, outliers: usize, seed: u64) -> Vec<f64> {
    let mut s = Stream::new(seed, FIXTURE, 2);
    let outliers = outliers.min(m);
    let mut eig: Vec<f64> = (0..outliers).map(|j| 10.0 * 0.75f64.powi(j as i32) * (1.0 + 0.05 * s.uniform())).collect();
    eig.extend((outliers..m).map(|_| s.uniform_in(-0.3, 1.0)));
    eig
}

pub fn uniform_spectrum(m: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut s = Stream::new(seed, FIXTURE, 3);
    (0..m).map(|_| s.uniform_in(lo, hi)).collect()
}

/// Random symmetric tridiagonal `(alpha, beta)` with `q` diagonal entries.
pub fn random_tridiagonal(q: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut s = Stream::new(seed, FIXTURE, 4);
    let alpha = (0..q).map(|_| s.normal()).collect();
    let beta = (0..q.saturating_sub(1)).map(|_| 0.1 + s.uniform()).collect();
    (alpha, beta)
}

/// Expands `(alpha, beta)` into the dense tridiagonal matrix.
pub fn tridiagonal_matrix(alpha: &[f64], beta: &[f64]) -> DenseMatrix {
    let q = alpha.len();
    let mut t = DenseMatrix::diagonal(alpha);
    for (i, b) in beta.iter().enumerate().take(q.saturating_sub(1)) {
        t.set(i, i + 1, *b);
        t.set(i + 1, i, *b);
    }
    t
}

/// Architecture switches for [`toy_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyVariant {
    pub norm: bool,
    pub residual: bool,
    pub activation: Activation,
    pub loss: LossKind,
}

impl ToyVariant {
    /// Every combination of norm, residual, activation and loss.
    pub fn all() -> Vec<ToyVariant> {
        let mut out = Vec::new();
        for norm in [false, true] {
            for residual in [false, true] {
                for activation in [Activation::Tanh, Activation::Sigmoid, Activation::Softplus] {
                    for loss in [LossKind::Mse, LossKind::CrossEntropy] {
                        out.push(ToyVariant { norm, residual, activation, loss });
                    }
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        format!("norm={} residual={} act={:?} loss={:?}", self.norm, self.residual, self.activation, self.loss)
    }
}

/// A 2-8-8-2 network on 32 seeded examples, at a random (not trained)
/// parameter point. `m` is 114, or 146 with normalization.
pub fn toy_model(variant: ToyVariant, seed: u64) -> Result<(Network, ParamVector)> {
    let config = ModelConfig {
        input_dim: 2,
        output_dim: 2,
        hidden: vec![8, 8],
        activation: variant.activation,
        residual: vec![false, variant.residual],
        norm: vec![variant.norm; 2],
        loss: variant.loss,
    };
    let data = match variant.loss {
        LossKind::CrossEntropy => DatasetSpec::new(DatasetKind::Ring, 32, 0.1, seed),
        LossKind::Mse => DatasetSpec {
            input_dim: Some(2),
            output_dim: Some(2),
            ..DatasetSpec::new(DatasetKind::LinearRegression, 32, 0.1, seed)
        },
    };
    let network = Network::new(config.clone(), data.generate()?)?;
    let mut params = init_params(&config, seed)?;
    // move off the symmetric initial point (zero biases, unit scales)
    let mut s = Stream::new(seed, FIXTURE, 5);
    params.values.iter_mut().for_each(|x| *x += 0.1 * s.normal());
    Ok((network, params))
}
