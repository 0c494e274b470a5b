//! Matrix-free Hessian spectral analysis.
//!
//! The crate is organised around [`operator::SymmetricOperator`]: every
//! estimator in [`spectral`] only ever asks for `H v`. The [`nn`] module
//! supplies that product exactly for small neural networks by differentiating
//! through the gradient a second time, and [`oracle`] provides dense ground
//! truth for checking all of it at desk scale.

pub mod error;
pub mod landscape;
pub mod nn;
pub mod operator;
pub mod oracle;
pub mod rng;
pub mod spectral;
pub mod testing;
pub mod vector;

pub use error::{Error, Result};
pub use operator::{BlockLayout, DenseMatrix, Segment, SymmetricOperator};
