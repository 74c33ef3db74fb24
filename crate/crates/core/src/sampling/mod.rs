//! Exact sampling, the enumeration oracle and conditional sampling.

pub mod oracle;
pub mod sampler;

pub use oracle::{
    conditional_distribution_oracle, correlation, enumerate_distribution,
    enumerate_distribution_capped, gap_probability, palm_distribution_oracle, DppDistribution,
};
pub use sampler::{sample_batch, sample_dpp, trial_rng, SampleBatch, SpectralSampler};

use crate::error::{DppError, Result};
use crate::kernel::{Configuration, KernelMatrix, SiteSubset};
use crate::palm::{conditional_kernel, ConditioningTolerances};

/// Exact sample of `X ∩ B^c` given `X ∩ B`, drawn from `P_{K^{[X, B]}}`.
pub fn sample_conditional(
    k: &KernelMatrix,
    x: &Configuration,
    b: &SiteSubset,
    seed: u64,
) -> Result<Configuration> {
    let c = conditional_kernel(k, x, b, &ConditioningTolerances::default())?;
    if !c.status.is_regular() {
        return Err(DppError::DegenerateKernel);
    }
    sample_dpp(&c.matrix, seed)
}
