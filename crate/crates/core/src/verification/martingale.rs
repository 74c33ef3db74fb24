//! Martingale identities for conditional kernels along growing windows.

use rayon::prelude::*;
use serde_json::json;

use super::{
    check_dims, flatten_real, positive_traces, quad_form, submasks, CheckContext, CheckResult, Component, Mode,
    Moments,
};
use crate::error::{DppError, Result};
use crate::kernel::{compress, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{self, CMatrix, CVector};
use crate::palm::{conditional_kernel, ConditionalKernel};
use crate::sampling::sample_batch;

fn cond(k: &KernelMatrix, x: &Configuration, b: &SiteSubset, ctx: &CheckContext) -> Result<ConditionalKernel> {
    conditional_kernel(k, x, b, &ctx.conditioning)
}

/// `sum_xi P(X ∩ B = xi) K^{[xi, B]} = chi_{B^c} K chi_{B^c}`.
pub fn check_one_step_martingale(k: &KernelMatrix, b: &SiteSubset, ctx: &CheckContext) -> Result<CheckResult> {
    check_dims(k, &[b])?;
    let outside = b.complement();
    let target = compress(k, &outside, &outside)?;
    match ctx.mode {
        Mode::Exact => {
            let law = ctx.law(k)?;
            let marginal = law.marginal(b);
            let mut acc = CMatrix::zeros(k.n(), k.n());
            let mut degenerate_positive = 0usize;
            let mut positive = 0usize;
            for s in submasks(b.bits()) {
                let p = marginal.probs[s as usize];
                if p == 0.0 {
                    continue;
                }
                let c = cond(k, &Configuration::from_bits(s), b, ctx)?;
                if p > ctx.tolerances.positive_prob {
                    positive += 1;
                    if !c.status.is_regular() {
                        degenerate_positive += 1;
                    }
                }
                acc += c.matrix.entries() * num_complex::Complex64::new(p, 0.0);
            }
            let residual = linalg::max_abs(&(acc - &target));
            Ok(CheckResult::new(
                "one_step_martingale",
                Mode::Exact,
                ctx.seed,
                vec![
                    Component::new("mean_residual", residual, ctx.tolerances.exact),
                    Component::new("degenerate_positive_traces", degenerate_positive as f64, 0.0),
                ],
                json!({ "n": k.n(), "window": b.indices(), "positive_traces": positive }),
            ))
        }
        Mode::MonteCarlo => {
            ctx.require_trials()?;
            let rows = outside.indices();
            let batch = sample_batch(k, ctx.seed, ctx.trials, "one_step_martingale")?;
            let values: Vec<Vec<f64>> = batch
                .configs
                .par_iter()
                .map(|x| cond(k, x, b, ctx).map(|c| flatten_real(c.matrix.entries(), &rows)))
                .collect::<Result<_>>()?;
            let mut moments = Moments::new(2 * rows.len() * rows.len());
            values.iter().for_each(|v| moments.push(v));
            let expected = flatten_real(&target, &rows);
            let z = moments.max_z(&expected);
            let bias = moments.mean().iter().zip(&expected).map(|(m, t)| (m - t).abs()).fold(0.0, f64::max);
            Ok(CheckResult::new(
                "one_step_martingale",
                Mode::MonteCarlo,
                ctx.seed,
                vec![Component::new("mean_z", z, ctx.tolerances.mc_sigmas)],
                json!({ "n": k.n(), "window": b.indices(), "trials": ctx.trials, "max_abs_bias": bias }),
            ))
        }
    }
}

struct StageValues {
    quad: f64,
    minors: CMatrix,
    diag_sum: f64,
}

fn stage_values(
    k: &KernelMatrix,
    x: &Configuration,
    b: &SiteSubset,
    phi: &CVector,
    g: &[f64],
    outside: &[usize],
    ctx: &CheckContext,
) -> Result<StageValues> {
    let c = cond(k, x, b, ctx)?;
    let m = c.matrix.entries();
    Ok(StageValues {
        quad: quad_form(m, phi),
        minors: linalg::exterior_square(m, outside),
        diag_sum: (0..k.n()).map(|i| g[i] * m[(i, i)].re).sum(),
    })
}

fn validate_sequence(k: &KernelMatrix, windows: &[SiteSubset], w: &SiteSubset, phi: &CVector) -> Result<()> {
    let all: Vec<&SiteSubset> = windows.iter().chain(std::iter::once(w)).collect();
    check_dims(k, &all)?;
    if phi.len() != k.n() {
        return Err(DppError::DimensionMismatch { expected: k.n(), actual: phi.len() });
    }
    if windows.is_empty() {
        return Err(DppError::NotNested("no windows given".into()));
    }
    for (i, pair) in windows.windows(2).enumerate() {
        if !pair[0].is_subset(&pair[1]) {
            return Err(DppError::NotNested(format!("window {i} is not contained in window {}", i + 1)));
        }
    }
    if !windows.last().expect("nonempty").is_subset(w) {
        return Err(DppError::NotNested("last window leaves W".into()));
    }
    if let Some(i) = w.indices().into_iter().find(|&i| phi[i].norm() > 0.0) {
        return Err(DppError::InvalidParameter(format!("test function is nonzero at site {i} inside W")));
    }
    Ok(())
}

/// Martingale property of `chi_{E \ W} K^{[X, B_n]} chi_{E \ W}` along
/// `∅ ⊆ B_1 ⊆ ... ⊆ B_m ⊆ W`, tested through `<. phi, phi>` and through the
/// matrix of `2 x 2` minors, plus the L2 bound for the additive statistic
/// `S_g = sum_{x in X} |phi(x)|^2`.
pub fn check_martingale_sequence(
    k: &KernelMatrix,
    windows: &[SiteSubset],
    w: &SiteSubset,
    phi: &CVector,
    ctx: &CheckContext,
) -> Result<CheckResult> {
    validate_sequence(k, windows, w, phi)?;
    let n = k.n();
    let outside = w.complement().indices();
    let g: Vec<f64> = phi.iter().map(|z| z.norm_sqr()).collect();
    let mut seq = vec![SiteSubset::empty(n)];
    seq.extend(windows.iter().cloned());
    let details_windows: Vec<Vec<usize>> = windows.iter().map(SiteSubset::indices).collect();

    match ctx.mode {
        Mode::Exact => {
            let law = ctx.law(k)?;
            let second_moment: f64 = law
                .probs
                .iter()
                .enumerate()
                .map(|(s, p)| {
                    let sg: f64 = (0..n).filter(|i| s >> i & 1 == 1).map(|i| g[i]).sum();
                    p * sg * sg
                })
                .sum();
            let mut order1 = 0.0_f64;
            let mut order2 = 0.0_f64;
            let mut l2 = f64::NEG_INFINITY;
            let mut stage_stats = Vec::new();
            for stage in 0..seq.len() {
                let bn = &seq[stage];
                let traces = positive_traces(&law, bn, ctx.tolerances.positive_prob);
                let mut lhs = 0.0;
                for (xi, p) in &traces {
                    let v = stage_values(k, xi, bn, phi, &g, &outside, ctx)?;
                    lhs += p * v.diag_sum * v.diag_sum;
                }
                l2 = l2.max(lhs - second_moment);
                if stage + 1 == seq.len() {
                    stage_stats.push(json!({ "window": bn.len(), "l2_lhs": lhs }));
                    break;
                }
                let next = &seq[stage + 1];
                let next_marginal = law.marginal(next);
                let mut stage_residual = 0.0_f64;
                for (xi, p) in &traces {
                    let here = stage_values(k, xi, bn, phi, &g, &outside, ctx)?;
                    let fresh = next.difference(bn).bits();
                    let mut quad = 0.0;
                    let mut minors = CMatrix::zeros(here.minors.nrows(), here.minors.ncols());
                    for extra in submasks(fresh) {
                        let eta_bits = xi.bits() | extra;
                        let q = next_marginal.probs[eta_bits as usize];
                        if q == 0.0 {
                            continue;
                        }
                        let v = stage_values(k, &Configuration::from_bits(eta_bits), next, phi, &g, &outside, ctx)?;
                        let weight = q / p;
                        quad += weight * v.quad;
                        minors += v.minors * num_complex::Complex64::new(weight, 0.0);
                    }
                    stage_residual = stage_residual.max((quad - here.quad).abs());
                    order2 = order2.max(linalg::max_abs(&(minors - here.minors)));
                }
                order1 = order1.max(stage_residual);
                stage_stats.push(json!({ "window": bn.len(), "traces": traces.len(), "l2_lhs": lhs, "order1": stage_residual }));
            }
            Ok(CheckResult::new(
                "martingale_sequence",
                Mode::Exact,
                ctx.seed,
                vec![
                    Component::new("order1", order1, ctx.tolerances.exact),
                    Component::new("exterior2", order2, ctx.tolerances.exterior),
                    Component::new("l2_bound", l2, ctx.tolerances.exact),
                ],
                json!({ "n": n, "windows": details_windows, "w": w.indices(), "second_moment": second_moment, "stages": stage_stats }),
            ))
        }
        Mode::MonteCarlo => {
            ctx.require_trials()?;
            let batch = sample_batch(k, ctx.seed, ctx.trials, "martingale_sequence")?;
            let per_sample: Vec<Vec<f64>> = batch
                .configs
                .par_iter()
                .map(|x| {
                    let vals = seq
                        .iter()
                        .map(|bn| stage_values(k, &x.restrict(bn), bn, phi, &g, &outside, ctx))
                        .collect::<Result<Vec<_>>>()?;
                    let sg: f64 = x.indices().iter().map(|&i| g[i]).sum();
                    let mut row = Vec::new();
                    for pair in vals.windows(2) {
                        row.push(pair[1].quad - pair[0].quad);
                    }
                    for pair in vals.windows(2) {
                        let d = &pair[1].minors - &pair[0].minors;
                        row.extend(d.iter().flat_map(|z| [z.re, z.im]));
                    }
                    for v in &vals {
                        row.push(v.diag_sum * v.diag_sum - sg * sg);
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            let stages = seq.len() - 1;
            let minor_len = if per_sample.is_empty() { 0 } else { (per_sample[0].len() - stages - seq.len()) / stages.max(1) };
            let mut moments = Moments::new(per_sample.first().map_or(0, Vec::len));
            per_sample.iter().for_each(|r| moments.push(r));
            let mean = moments.mean();
            let se = moments.std_error();
            let z_range = |lo: usize, hi: usize| {
                (lo..hi).map(|i| super::z_score(mean[i], se[i])).fold(0.0, f64::max)
            };
            let order1 = z_range(0, stages);
            let order2 = z_range(stages, stages + stages * minor_len);
            let l2 = (stages + stages * minor_len..mean.len())
                .map(|i| if mean[i] > 0.0 { super::z_score(mean[i], se[i]) } else { 0.0 })
                .fold(0.0, f64::max);
            Ok(CheckResult::new(
                "martingale_sequence",
                Mode::MonteCarlo,
                ctx.seed,
                vec![
                    Component::new("order1_z", order1, ctx.tolerances.mc_sigmas),
                    Component::new("exterior2_z", order2, ctx.tolerances.mc_sigmas),
                    Component::new("l2_bound_z", l2, ctx.tolerances.mc_sigmas),
                ],
                json!({ "n": n, "windows": details_windows, "w": w.indices(), "trials": ctx.trials }),
            ))
        }
    }
}
