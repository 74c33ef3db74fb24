//! Variance bound for quadratic forms of conditional kernels.

use rayon::prelude::*;
use serde_json::json;

use super::{check_dims, positive_traces, quad_form, z_score, CheckContext, CheckResult, Component, Mode};
use crate::error::{DppError, Result};
use crate::kernel::{compress, dilate_to_projection, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{CMatrix, CVector};
use crate::palm::conditional_kernel;
use crate::sampling::sample_batch;

struct Terms {
    /// `<K^{[xi, B]} phi, phi>`.
    quad: f64,
    /// `‖(K^{[xi, B]} - chi_C K chi_C) phi‖^2`.
    deviation: f64,
}

fn terms(k: &KernelMatrix, xi: &Configuration, b: &SiteSubset, centre: &CMatrix, phi: &CVector, ctx: &CheckContext) -> Result<Terms> {
    let c = conditional_kernel(k, xi, b, &ctx.conditioning)?;
    let m = c.matrix.entries();
    Ok(Terms { quad: quad_form(m, phi), deviation: ((m - centre) * phi).norm_squared() })
}

fn weighted_variance(values: &[(f64, f64)]) -> (f64, f64) {
    let total: f64 = values.iter().map(|(p, _)| p).sum();
    let mean = values.iter().map(|(p, v)| p * v).sum::<f64>() / total;
    let var = values.iter().map(|(p, v)| p * (v - mean) * (v - mean)).sum::<f64>() / total;
    (mean, var)
}

/// `Var <K^{[X, B]} phi, phi> <= ‖phi‖^2 ‖chi_B K phi‖^2` for `phi`
/// supported off `B`. For projections the dominating identity
/// `E ‖(K^{[X, B]} - chi_C K chi_C) phi‖^2 = ‖chi_B K phi‖^2` is checked
/// too; in Exact mode it is also checked on the projection dilation of `K`,
/// together with equality of the two variances.
pub fn check_variance_bound(k: &KernelMatrix, b: &SiteSubset, phi: &CVector, ctx: &CheckContext) -> Result<CheckResult> {
    check_dims(k, &[b])?;
    let n = k.n();
    if phi.len() != n {
        return Err(DppError::DimensionMismatch { expected: n, actual: phi.len() });
    }
    if let Some(i) = b.indices().into_iter().find(|&i| phi[i].norm() > 0.0) {
        return Err(DppError::InvalidParameter(format!("test function is nonzero at site {i} inside the window")));
    }
    let outside = b.complement();
    let centre = compress(k, &outside, &outside)?;
    let kphi = k.entries() * phi;
    let window_part: f64 = b.indices().iter().map(|&i| kphi[i].norm_sqr()).sum();
    let bound = phi.norm_squared() * window_part;

    match ctx.mode {
        Mode::Exact => {
            let law = ctx.law(k)?;
            let traces = positive_traces(&law, b, ctx.tolerances.positive_prob);
            let mut quads = Vec::with_capacity(traces.len());
            let mut deviation = 0.0;
            for (xi, p) in &traces {
                let t = terms(k, xi, b, &centre, phi, ctx)?;
                quads.push((*p, t.quad));
                deviation += p * t.deviation;
            }
            let (mean, var) = weighted_variance(&quads);
            let mut components = vec![Component::new("inequality", var - bound, ctx.tolerances.exact)];
            if k.is_projection() {
                components.push(Component::new("projection_identity", (deviation - window_part).abs(), ctx.tolerances.exact));
            }

            let dilated = dilate_to_projection(k)?;
            let big_b = SiteSubset::from_mask((0..2 * n).map(|i| i < n && b.contains(i)).collect());
            let big_phi = CVector::from_fn(2 * n, |i, _| if i < n { phi[i] } else { num_complex::Complex64::new(0.0, 0.0) });
            let big_out = big_b.complement();
            let big_centre = compress(&dilated, &big_out, &big_out)?;
            let mut big_quads = Vec::with_capacity(traces.len());
            let mut big_deviation = 0.0;
            for (xi, p) in &traces {
                let lifted = Configuration::new(xi.indices().to_vec(), 2 * n)?;
                let t = terms(&dilated, &lifted, &big_b, &big_centre, &big_phi, ctx)?;
                big_quads.push((*p, t.quad));
                big_deviation += p * t.deviation;
            }
            let (_, big_var) = weighted_variance(&big_quads);
            components.push(Component::new("dilation_identity", (big_deviation - window_part).abs(), ctx.tolerances.exact));
            components.push(Component::new("dilation_variance", (big_var - var).abs(), ctx.tolerances.exact));

            Ok(CheckResult::new(
                "variance_bound",
                Mode::Exact,
                ctx.seed,
                components,
                json!({
                    "n": n,
                    "window": b.indices(),
                    "variance": var,
                    "bound": bound,
                    "mean": mean,
                    "expected_deviation": deviation,
                    "dilated_variance": big_var,
                    "traces": traces.len(),
                }),
            ))
        }
        Mode::MonteCarlo => {
            ctx.require_trials()?;
            let batch = sample_batch(k, ctx.seed, ctx.trials, "variance_bound")?;
            let samples: Vec<Terms> = batch
                .configs
                .par_iter()
                .map(|x| terms(k, &x.restrict(b), b, &centre, phi, ctx))
                .collect::<Result<_>>()?;
            let count = samples.len() as f64;
            let mean = samples.iter().map(|t| t.quad).sum::<f64>() / count;
            let m2 = samples.iter().map(|t| (t.quad - mean).powi(2)).sum::<f64>() / count;
            let m4 = samples.iter().map(|t| (t.quad - mean).powi(4)).sum::<f64>() / count;
            let var = m2 * count / (count - 1.0);
            // The first-order term vanishes for a symmetric two-point law, where
            // the variance sits exactly at the bound; var/N keeps the scale of
            // the second-order fluctuation.
            let var_se = ((m4 - m2 * m2).max(0.0) / count + (var / count).powi(2)).sqrt();
            let excess = var - bound;
            let excess_z = if excess > 0.0 { z_score(excess, var_se) } else { 0.0 };
            let mut components = vec![Component::new("inequality_z", excess_z, ctx.tolerances.mc_sigmas)];
            let dev_mean = samples.iter().map(|t| t.deviation).sum::<f64>() / count;
            if k.is_projection() {
                let dev_var = samples.iter().map(|t| (t.deviation - dev_mean).powi(2)).sum::<f64>() / (count - 1.0);
                let z = z_score(dev_mean - window_part, (dev_var / count).sqrt());
                components.push(Component::new("projection_identity_z", z, ctx.tolerances.mc_sigmas));
            }
            Ok(CheckResult::new(
                "variance_bound",
                Mode::MonteCarlo,
                ctx.seed,
                components,
                json!({
                    "n": n,
                    "window": b.indices(),
                    "variance": var,
                    "variance_se": var_se,
                    "bound": bound,
                    "expected_deviation": dev_mean,
                    "trials": ctx.trials,
                }),
            ))
        }
    }
}
