//! The JSON run configuration.
//!
//! ```json
//! {
//!   "model": { "kind": "mlp", "input_dim": 2, "output_dim": 2, "hidden": [8, 8],
//!              "activation": "tanh", "residual": [false, true], "norm": [true, true],
//!              "loss": "cross_entropy" },
//!   "dataset": { "kind": "two_gaussians", "n": 200, "noise": 0.6, "seed": 1 },
//!   "init_seed": 0,
//!   "train": { "steps": 500, "learning_rate": 0.1, "momentum": 0.9 },
//!   "job": { "seed": 7, "n_v": 100 }
//! }
//! ```
//!
//! A quadratic model `1/2 theta^T A theta` replaces the network with a fixed
//! matrix (`"matrix"` as rows, or `"diagonal"`), optional named `"blocks"`
//! and an optional evaluation point `"theta"` (zeros by default).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use hessian_spectra::nn::{
    init_params, train, DatasetSpec, ModelConfig, Network, Objective, QuadraticObjective, TrainConfig,
};
use hessian_spectra::{BlockLayout, DenseMatrix};

use crate::error::CliError;
use crate::job::JobDefaults;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub job: JobDefaults,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Mlp(ModelConfig),
    Quadratic(QuadraticSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub diagonal: Option<Vec<f64>>,
    #[serde(default)]
    pub blocks: Option<Vec<BlockSpec>>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub name: String,
    pub len: usize,
}

/// A loss together with the point its Hessian is analysed at.
#[derive(Clone)]
pub struct Analysis {
    pub objective: Arc<dyn Objective>,
    /// Set for network models; used to cap the landscape batch.
    pub network: Option<Network>,
    pub theta: Vec<f64>,
    /// Loss history when the config asked for training.
    pub train_losses: Option<Vec<f64>>,
}

impl Analysis {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn layout(&self) -> &BlockLayout {
        self.objective.layout()
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config does not parse: {e}")))
    }

    /// Builds the model, generates data and trains if asked to.
    pub fn build(&self) -> Result<Analysis, CliError> {
        match &self.model {
            ModelSpec::Quadratic(q) => {
                if self.dataset.is_some() || self.train.is_some() {
                    return Err(CliError::Config("quadratic models take no dataset or training".into()));
                }
                q.build()
            }
            ModelSpec::Mlp(cfg) => {
                let data =
                    self.dataset.as_ref().ok_or_else(|| CliError::Config("mlp models need a `dataset`".into()))?;
                let batch = data.generate().map_err(CliError::config)?;
                let network = Network::new(cfg.clone(), batch).map_err(CliError::config)?;
                let init = init_params(cfg, self.init_seed).map_err(CliError::config)?;
                let (theta, train_losses) = match &self.train {
                    Some(t) => {
                        let out = train(&network, &init.values, t).map_err(CliError::config)?;
                        (out.theta, Some(out.losses))
                    }
                    None => (init.values, None),
                };
                Ok(Analysis { objective: Arc::new(network.clone()), network: Some(network), theta, train_losses })
            }
        }
    }
}

impl QuadraticSpec {
    fn build(&self) -> Result<Analysis, CliError> {
        let matrix = match (&self.matrix, &self.diagonal) {
            (Some(rows), None) => DenseMatrix::from_rows(rows).map_err(CliError::config)?,
            (None, Some(d)) => DenseMatrix::diagonal(d),
            _ => return Err(CliError::Config("quadratic model needs exactly one of `matrix` or `diagonal`".into())),
        };
        let m = matrix.dim();
        if m == 0 {
            return Err(CliError::Config("quadratic model has dimension 0".into()));
        }
        let layout = match &self.blocks {
            Some(blocks) => {
                BlockLayout::from_lengths(blocks.iter().map(|b| (b.name.clone(), b.len))).map_err(CliError::config)?
            }
            None => BlockLayout::whole("theta", m).map_err(CliError::config)?,
        };
        let objective = QuadraticObjective::with_layout(matrix, layout).map_err(CliError::config)?;
        let theta = self.theta.clone().unwrap_or_else(|| vec![0.0; m]);
        if theta.len() != m {
            return Err(CliError::Config(format!("`theta` has length {}, matrix has dimension {m}", theta.len())));
        }
        Ok(Analysis { objective: Arc::new(objective), network: None, theta, train_losses: None })
    }
}
