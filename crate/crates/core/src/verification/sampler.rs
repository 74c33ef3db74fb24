//! Agreement of the sampler with the enumeration oracle, and of the
//! projection dilation with its defining block structure.

use serde_json::json;

use super::{z_score, CheckContext, CheckResult, Component, Mode};
use crate::error::Result;
use crate::kernel::{dilate_to_projection, KernelMatrix};
use crate::linalg::{self, CMatrix};
use crate::sampling::sample_batch;

/// Per-subset empirical frequencies of a sample batch against the oracle
/// law, as binomial z-scores. Always runs in Monte Carlo mode.
pub fn check_sampler_agreement(k: &KernelMatrix, ctx: &CheckContext) -> Result<CheckResult> {
    ctx.require_trials()?;
    let law = ctx.law(k)?;
    let batch = sample_batch(k, ctx.seed, ctx.trials, "sampler_agreement")?;
    let mut counts = vec![0usize; law.probs.len()];
    for x in &batch.configs {
        counts[x.bits() as usize] += 1;
    }
    let trials = ctx.trials as f64;
    let mut worst = 0.0_f64;
    let mut worst_subset = 0usize;
    for (s, (&p, &c)) in law.probs.iter().zip(&counts).enumerate() {
        let se = (p * (1.0 - p) / trials).sqrt();
        let z = z_score(c as f64 / trials - p, se);
        if z > worst {
            worst = z;
            worst_subset = s;
        }
    }
    Ok(CheckResult::new(
        "sampler_agreement",
        Mode::MonteCarlo,
        ctx.seed,
        vec![Component::new("max_subset_z", worst, ctx.tolerances.mc_sigmas)],
        json!({
            "n": k.n(),
            "trials": ctx.trials,
            "subsets": law.probs.len(),
            "worst_subset": worst_subset,
            "worst_probability": law.probs[worst_subset],
            "worst_frequency": counts[worst_subset] as f64 / trials,
        }),
    ))
}

/// `‖K~^2 - K~‖_max` for the dilation `K~` on the doubled ground set, and
/// recovery of `K` and `1 - K` from its diagonal blocks. Always exact.
pub fn check_dilation(k: &KernelMatrix, ctx: &CheckContext) -> Result<CheckResult> {
    let n = k.n();
    let d = dilate_to_projection(k)?;
    let m = d.entries();
    let idempotence = linalg::max_abs(&(m * m - m));
    let first: Vec<usize> = (0..n).collect();
    let second: Vec<usize> = (n..2 * n).collect();
    let corner = linalg::max_abs(&(linalg::select(m, &first, &first) - k.entries()));
    let complement = CMatrix::identity(n, n) - k.entries();
    let opposite = linalg::max_abs(&(linalg::select(m, &second, &second) - complement));
    Ok(CheckResult::new(
        "dilation",
        Mode::Exact,
        ctx.seed,
        vec![
            Component::new("idempotence", idempotence, ctx.tolerances.exact),
            Component::new("corner_recovery", corner, 0.0),
            Component::new("complement_recovery", opposite, ctx.tolerances.exact),
        ],
        json!({ "n": n, "dilated_rank": d.rank(0.5) }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::factory;

    #[test]
    fn dilation_of_half_ones() {
        let k = factory::uniform_rank1(2).unwrap();
        let r = check_dilation(&k, &CheckContext::exact()).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.details["dilated_rank"], 2);
    }

    #[test]
    fn sampler_agrees_on_diagonal() {
        let k = factory::diagonal(&[0.2, 0.6, 0.9]).unwrap();
        let r = check_sampler_agreement(&k, &CheckContext::monte_carlo(20_000, 4)).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.mode, Mode::MonteCarlo);
    }
}
