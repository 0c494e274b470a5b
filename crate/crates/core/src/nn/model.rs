//! Small fully connected networks with optional residual and
//! batch-normalization layers.
//!
//! Hidden layer `i` computes
//!
//! ```text
//! z = h W + b
//! z = gamma * (z - mean(z)) / sqrt(var(z) + 1e-5) + beta     (if norm[i])
//! z = z + h                                                  (if residual[i])
//! h' = act(z)
//! ```
//!
//! with batch statistics over the rows, followed by a linear output layer.
//! Parameters are flattened layer by layer: `W` row-major (`fan_in x
//! fan_out`), then `b`, then `gamma`, then `beta`.

use serde::{Deserialize, Serialize};

use super::data::Batch;
use super::objective::{self, HessianOperator, Objective};
use super::tape::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::operator::BlockLayout;
use crate::rng::{Purpose, Stream};

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    Softplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(1/N) sum_i |out_i - y_i|^2`
    #[default]
    Mse,
    /// Softmax cross-entropy against probability-vector targets.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Per hidden layer; empty means no residual connections.
    #[serde(default)]
    pub residual: Vec<bool>,
    /// Per hidden layer; empty means no normalization.
    #[serde(default)]
    pub norm: Vec<bool>,
    #[serde(default)]
    pub loss: LossKind,
}

impl ModelConfig {
    pub fn mlp(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            output_dim,
            hidden,
            activation: Activation::Tanh,
            residual: Vec::new(),
            norm: Vec::new(),
            loss: LossKind::Mse,
        }
    }

    pub fn has_norm(&self, layer: usize) -> bool {
        self.norm.get(layer).copied().unwrap_or(false)
    }

    pub fn has_residual(&self, layer: usize) -> bool {
        self.residual.get(layer).copied().unwrap_or(false)
    }

    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden[layer - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("input and output dimensions must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        for (name, flags) in [("residual", &self.residual), ("norm", &self.norm)] {
            if !flags.is_empty() && flags.len() != self.hidden.len() {
                return Err(Error::invalid(format!(
                    "`{name}` has {} entries for {} hidden layers",
                    flags.len(),
                    self.hidden.len()
                )));
            }
        }
        for i in 0..self.hidden.len() {
            if self.has_residual(i) && self.fan_in(i) != self.hidden[i] {
                return Err(Error::invalid(format!(
                    "residual connection on hidden layer {i} needs equal widths, got {} -> {}",
                    self.fan_in(i),
                    self.hidden[i]
                )));
            }
        }
        Ok(())
    }

    /// Segment names and lengths in flattening order.
    pub fn layout(&self) -> Result<BlockLayout> {
        self.validate()?;
        let mut parts: Vec<(String, usize)> = Vec::new();
        for (i, &w) in self.hidden.iter().enumerate() {
            parts.push((format!("hidden{i}.weight"), self.fan_in(i) * w));
            parts.push((format!("hidden{i}.bias"), w));
            if self.has_norm(i) {
                parts.push((format!("hidden{i}.scale"), w));
                parts.push((format!("hidden{i}.shift"), w));
            }
        }
        let last = self.hidden.last().copied().unwrap_or(self.input_dim);
        parts.push(("output.weight".into(), last * self.output_dim));
        parts.push(("output.bias".into(), self.output_dim));
        BlockLayout::from_lengths(parts)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.layout()?.total_len())
    }
}

/// Flat parameters together with their named layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: BlockLayout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: BlockLayout) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::invalid(format!(
                "{} values for a layout of {} parameters",
                values.len(),
                layout.total_len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.get(name)?.range();
        Some(&mut self.values[range])
    }
}

/// Glorot-uniform weights, zero biases, unit norm scale and zero shift.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamVector> {
    let layout = config.layout()?;
    let mut values = vec![0.0; layout.total_len()];
    let mut stream = Stream::new(seed, Purpose::Init, 0);
    for seg in layout.segments() {
        let (layer, kind) = seg.name.split_once('.').unwrap_or((seg.name.as_str(), ""));
        let slot = &mut values[seg.range()];
        match kind {
            "weight" => {
                let (fan_in, fan_out) = if layer == "output" {
                    (config.hidden.last().copied().unwrap_or(config.input_dim), config.output_dim)
                } else {
                    let i: usize = layer.trim_start_matches("hidden").parse().expect("layer index");
                    (config.fan_in(i), config.hidden[i])
                };
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                slot.iter_mut().for_each(|w| *w = stream.uniform_in(-s, s));
            }
            "scale" => slot.iter_mut().for_each(|g| *g = 1.0),
            _ => {}
        }
    }
    ParamVector::new(values, layout)
}

/// A model together with the batch its loss is averaged over.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    batch: Batch,
    layout: BlockLayout,
}

impl Network {
    pub fn new(config: ModelConfig, batch: Batch) -> Result<Self> {
        let layout = config.layout()?;
        if batch.input_dim() != config.input_dim {
            return Err(Error::invalid(format!(
                "batch inputs have {} columns, model expects {}",
                batch.input_dim(),
                config.input_dim
            )));
        }
        if batch.output_dim() != config.output_dim {
            return Err(Error::invalid(format!(
                "batch targets have {} columns, model produces {}",
                batch.output_dim(),
                config.output_dim
            )));
        }
        if config.loss == LossKind::CrossEntropy && !batch.targets_are_distributions() {
            return Err(Error::invalid("cross-entropy targets must be non-negative rows summing to 1"));
        }
        Ok(Network { config, batch, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn batch(&self) -> &Batch {
        &self.batch
    }

    /// The same model over only the first `k` examples.
    pub fn with_batch_limit(&self, k: usize) -> Network {
        Network { config: self.config.clone(), batch: self.batch.truncated(k), layout: self.layout.clone() }
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.layout != self.layout {
            return Err(Error::invalid("parameter layout does not match the model"));
        }
        Ok(())
    }

    pub fn forward_loss(&self, params: &ParamVector) -> Result<f64> {
        self.check_params(params)?;
        objective::loss(self, &params.values)
    }

    pub fn gradient(&self, params: &ParamVector) -> Result<ParamVector> {
        self.check_params(params)?;
        let g = objective::gradient(self, &params.values)?;
        ParamVector::new(g, self.layout.clone())
    }

    pub fn hvp(&self, params: &ParamVector, v: &ParamVector) -> Result<ParamVector> {
        self.check_params(params)?;
        if v.layout != self.layout {
            return Err(Error::invalid("direction layout does not match the model"));
        }
        let hv = objective::hvp(self, &params.values, &v.values)?;
        ParamVector::new(hv, self.layout.clone())
    }

    pub fn hessian_operator(&self, params: &ParamVector) -> Result<HessianOperator<&Network>> {
        self.check_params(params)?;
        HessianOperator::new(self, params.values.clone())
    }

    /// Records the network output (`N x output_dim`) on the tape.
    pub fn record_output(&self, tape: &mut Tape, theta: Var) -> Var {
        let n = self.batch.len();
        let mut h = tape.leaf(Tensor::new(n, self.config.input_dim, self.batch.inputs().to_vec()));
        let mut width = self.config.input_dim;
        let segments = self.layout.segments();
        let mut seg = segments.iter();
        let mut take = |tape: &mut Tape, rows: usize, cols: usize| {
            let s = seg.next().expect("layout matches config");
            debug_assert_eq!(s.len, rows * cols);
            tape.slice(theta, s.offset, rows, cols)
        };
        for (i, &out) in self.config.hidden.iter().enumerate() {
            let w = take(tape, width, out);
            let b = take(tape, 1, out);
            let hw = tape.matmul(h, w);
            let bb = tape.broadcast_rows(b, n);
            let mut z = tape.add(hw, bb);
            if self.config.has_norm(i) {
                let gamma = take(tape, 1, out);
                let beta = take(tape, 1, out);
                z = batch_norm(tape, z, gamma, beta, n);
            }
            if self.config.has_residual(i) {
                z = tape.add(z, h);
            }
            h = match self.config.activation {
                Activation::Tanh => tape.tanh(z),
                Activation::Sigmoid => tape.sigmoid(z),
                Activation::Softplus => tape.softplus(z),
            };
            width = out;
        }
        let w = take(tape, width, self.config.output_dim);
        let b = take(tape, 1, self.config.output_dim);
        let hw = tape.matmul(h, w);
        let bb = tape.broadcast_rows(b, n);
        tape.add(hw, bb)
    }

    /// Network outputs for the batch at `params`.
    pub fn predict(&self, params: &ParamVector) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        let mut tape = Tape::new();
        let t = tape.leaf(Tensor::row(params.values.clone()));
        let out = self.record_output(&mut tape, t);
        let v = tape.value(out);
        Ok(v.data.chunks_exact(v.cols).map(<[f64]>::to_vec).collect())
    }
}

fn batch_norm(tape: &mut Tape, z: Var, gamma: Var, beta: Var, n: usize) -> Var {
    let inv_n = 1.0 / n as f64;
    let sum = tape.sum_rows(z);
    let mean = tape.scale(sum, inv_n);
    let mean_b = tape.broadcast_rows(mean, n);
    let centered = tape.sub(z, mean_b);
    let sq = tape.mul(centered, centered);
    let sq_sum = tape.sum_rows(sq);
    let var = tape.scale(sq_sum, inv_n);
    let var_eps = tape.add_scalar(var, BN_EPS);
    let inv_std = tape.pow(var_eps, -0.5);
    let inv_std_b = tape.broadcast_rows(inv_std, n);
    let normalized = tape.mul(centered, inv_std_b);
    let gamma_b = tape.broadcast_rows(gamma, n);
    let scaled = tape.mul(normalized, gamma_b);
    let beta_b = tape.broadcast_rows(beta, n);
    tape.add(scaled, beta_b)
}

impl Objective for Network {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn record(&self, tape: &mut Tape, theta: Var) -> Var {
        let n = self.batch.len();
        let out = self.record_output(tape, theta);
        let y = tape.leaf(Tensor::new(n, self.config.output_dim, self.batch.targets().to_vec()));
        let per_batch = match self.config.loss {
            LossKind::Mse => {
                let diff = tape.sub(out, y);
                tape.dot(diff, diff)
            }
            LossKind::CrossEntropy => {
                let lse = tape.row_logsumexp(out);
                let lse_sum = tape.sum_all(lse);
                let fit = tape.dot(out, y);
                tape.sub(lse_sum, fit)
            }
        };
        tape.scale(per_batch, 1.0 / n as f64)
    }

    fn batch_size(&self) -> Option<usize> {
        Some(self.batch.len())
    }
}
