use serde::{Deserialize, Serialize};

use super::objective::{loss_and_gradient, Objective};
use crate::error::{Error, Result};

/// Full-batch gradient descent with heavy-ball momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 1000, learning_rate: 0.1, momentum: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    /// Loss before each step, then the final loss.
    pub losses: Vec<f64>,
}

pub fn train<O: Objective + ?Sized>(obj: &O, theta: &[f64], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if !(cfg.learning_rate > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::invalid("learning rate must be positive and momentum in [0, 1)"));
    }
    let mut theta = theta.to_vec();
    let mut velocity = vec![0.0; theta.len()];
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    for _ in 0..cfg.steps {
        let (l, g) = loss_and_gradient(obj, &theta)?;
        losses.push(l);
        for ((t, v), gi) in theta.iter_mut().zip(velocity.iter_mut()).zip(&g) {
            *v = cfg.momentum * *v - cfg.learning_rate * gi;
            *t += *v;
        }
    }
    losses.push(loss_and_gradient(obj, &theta)?.0);
    Ok(TrainOutcome { theta, losses })
}
