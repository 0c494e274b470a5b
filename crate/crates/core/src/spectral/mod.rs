//! Randomized spectral estimators over a [`SymmetricOperator`].
//!
//! * [`top_eigenpairs`]: power iteration with deflation.
//! * [`hutchinson_trace`]: `Tr(H) = E[v^T H v]` over random probes.
//! * [`slq_density`]: stochastic Lanczos quadrature estimate of the
//!   Gaussian-smoothed eigenvalue density.
//!
//! Probe `i` of every job draws from its own substream of the job seed, and
//! per-probe results are gathered in probe order before any reduction, so
//! outputs do not depend on the size of the rayon pool they run in.
//!
//! [`SymmetricOperator`]: crate::operator::SymmetricOperator

pub mod density;
pub mod hutchinson;
pub mod lanczos;
pub mod power;
pub mod tridiag;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::rng::ProbeDistribution;

pub use density::{gaussian_kernel, slq_density, DensityConfig, Sigma, SpectralDensity};
pub use hutchinson::{hutchinson_trace, TraceEstimate};
pub use lanczos::{lanczos, LanczosOutput};
pub use power::{top_eigenpairs, EigenPair, EigenResult, PowerConfig};
pub use tridiag::{tridiag_eig, SlqRun};

/// How random probe vectors are drawn for a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub distribution: ProbeDistribution,
    pub seed: u64,
    /// Number of probes, `n_v`.
    pub count: usize,
}

impl ProbeConfig {
    pub fn rademacher(count: usize, seed: u64) -> Self {
        ProbeConfig { distribution: ProbeDistribution::Rademacher, seed, count }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("probe count must be at least 1"));
        }
        Ok(())
    }
}
