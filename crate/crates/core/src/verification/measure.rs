//! Agreement of conditional kernels with the conditional laws computed by
//! brute force.

use serde_json::json;

use super::{check_dims, count_positivity_failures, positive_traces, submasks, CheckContext, CheckResult, Component, Mode};
use crate::error::{DppError, Result};
use crate::kernel::{compress, Configuration, KernelMatrix, SiteSubset};
use crate::linalg;
use crate::palm::conditional_kernel;
use crate::sampling::{enumerate_distribution_capped, DppDistribution};

/// Exact-only check of four statements, each over every trace of positive
/// probability:
///
/// * the Bayes slice of the law given `X ∩ B = xi` is the DPP of
///   `K^{[xi, B]}`;
/// * restricting to `W = W1 ∪ W2` and conditioning on `W1` commute, both as
///   laws and as kernels, `(chi_W K chi_W)^{[xi, W1]} = chi_W K^{[xi, W1]}
///   chi_W`;
/// * the law off `W` given the trace on `W1` is the mixture, over traces on
///   `W2`, of the laws of `K^{[xi ∪ eta, W]}`;
/// * given `X ∩ B^c`, the number of points in `B` keeps positive
///   probability.
///
/// Monte Carlo mode is not meaningful here; the check always enumerates.
pub fn check_measure_consistency(
    k: &KernelMatrix,
    b: &SiteSubset,
    w1: &SiteSubset,
    w2: &SiteSubset,
    ctx: &CheckContext,
) -> Result<CheckResult> {
    check_dims(k, &[b, w1, w2])?;
    if !w1.is_disjoint(w2) {
        return Err(DppError::WindowsOverlap);
    }
    let pp = ctx.tolerances.positive_prob;
    let tols = &ctx.conditioning;
    let law = ctx.law(k)?;
    let enumerate = |m: &KernelMatrix| enumerate_distribution_capped(m, ctx.oracle_cap);

    let b_traces = positive_traces(&law, b, pp);
    let mut bayes = 0.0_f64;
    for (xi, _) in &b_traces {
        let slice = law.condition_on_window(b, xi, pp)?;
        let c = conditional_kernel(k, xi, b, tols)?;
        let tv = if c.status.is_regular() { slice.tv(&enumerate(&c.matrix)?)? } else { 1.0 };
        bayes = bayes.max(tv);
    }

    let w = w1.union(w2);
    let w_out = w.complement();
    let k_w = k.derive(&compress(k, &w, &w)?)?;
    let law_w = law.marginal(&w);
    let w1_traces = positive_traces(&law, w1, pp);
    let mut push_tv = 0.0_f64;
    let mut push_kernel = 0.0_f64;
    let mut mixture_tv = 0.0_f64;
    for (xi, _) in &w1_traces {
        let restrict_then_condition = law_w.condition_on_window(w1, xi, pp)?;
        let given = law.condition_on_window(w1, xi, pp)?;
        let condition_then_restrict = given.marginal(&w);
        push_tv = push_tv.max(restrict_then_condition.tv(&condition_then_restrict)?);

        let on_w = conditional_kernel(&k_w, xi, w1, tols)?;
        let full = conditional_kernel(k, xi, w1, tols)?;
        let lhs = on_w.matrix.entries();
        let rhs = compress(&full.matrix, &w, &w)?;
        push_kernel = push_kernel.max(linalg::max_abs(&(lhs - rhs)));

        let target = enumerate(&k.derive(&compress(&full.matrix, &w_out, &w_out)?)?)?;
        let given_w2 = given.marginal(w2);
        let mut mixture = DppDistribution { n: k.n(), probs: vec![0.0; law.probs.len()] };
        for eta in submasks(w2.bits()) {
            let q = given_w2.probs[eta as usize];
            if q == 0.0 {
                continue;
            }
            let joint = Configuration::from_bits(xi.bits() | eta);
            let c = conditional_kernel(k, &joint, &w, tols)?;
            if !c.status.is_regular() {
                continue;
            }
            let part = enumerate(&c.matrix)?;
            for (acc, p) in mixture.probs.iter_mut().zip(&part.probs) {
                *acc += q * p;
            }
        }
        mixture_tv = mixture_tv.max(mixture.tv(&target)?);
    }

    let positivity = count_positivity_failures(&law, b, pp);

    let tol = ctx.tolerances.exact;
    Ok(CheckResult::new(
        "measure_consistency",
        Mode::Exact,
        ctx.seed,
        vec![
            Component::new("bayes_tv", bayes, tol),
            Component::new("pushforward_tv", push_tv, tol),
            Component::new("pushforward_kernel", push_kernel, tol),
            Component::new("measure_martingale_tv", mixture_tv, tol),
            Component::new("positivity_failures", positivity as f64, 0.0),
        ],
        json!({
            "n": k.n(),
            "window": b.indices(),
            "w1": w1.indices(),
            "w2": w2.indices(),
            "b_traces": b_traces.len(),
            "w1_traces": w1_traces.len(),
        }),
    ))
}
