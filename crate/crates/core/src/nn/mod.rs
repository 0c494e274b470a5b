//! A minimal second-order-differentiable neural-network module.
//!
//! [`tape`] is the autodiff engine, [`model`] the networks built on it, and
//! [`objective`] turns any tape-recorded loss into gradients, exact
//! Hessian-vector products and a [`HessianOperator`].

pub mod data;
pub mod model;
pub mod objective;
pub mod tape;
pub mod train;

pub use data::{make_dataset, Batch, DatasetKind, DatasetSpec};
pub use model::{init_params, Activation, LossKind, ModelConfig, Network, ParamVector};
pub use objective::{gradient, hvp, loss, loss_and_gradient, HessianOperator, Objective, QuadraticObjective};
pub use train::{train, TrainConfig, TrainOutcome};
