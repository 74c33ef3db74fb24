//! Completeness of kernel columns at the points of a sampled configuration
//! for projection kernels.

use rayon::prelude::*;
use serde_json::json;

use super::{check_dims, count_positivity_failures, CheckContext, CheckResult, Component, Mode};
use crate::error::{DppError, Result};
use crate::kernel::{range_basis, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{self, CVector};
use crate::palm::conditional_kernel;
use crate::sampling::sample_batch;

/// Singular values and Gram eigenvalues at or below this count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Default, Clone, Copy)]
struct Outcome {
    gram_failure: bool,
    evaluation_failure: bool,
    fixed_point: f64,
    fixed_point_failure: bool,
    gram_det: f64,
}

/// For a projection kernel of rank `r` and each configuration `X`:
/// the Gram matrix `[K(x_i, x_j)]` has rank `r`; restriction to `X` is
/// injective on `Ran K`; and `K^{[X, E \ B]} (chi_B h) = chi_B h` for every
/// `h` in the range vanishing on `X \ B`. Exact mode enumerates the support
/// and also confirms that given `X \ B` the count in `B` keeps positive
/// probability. `window` defaults to the first half of the sites.
pub fn check_completeness(k: &KernelMatrix, window: Option<&SiteSubset>, ctx: &CheckContext) -> Result<CheckResult> {
    if !k.is_projection() {
        return Err(DppError::NotAProjection);
    }
    let n = k.n();
    let b = match window {
        Some(w) => {
            check_dims(k, &[w])?;
            w.clone()
        }
        None => SiteSubset::range(n, 0, n / 2)?,
    };
    let rank = k.trace().round() as usize;
    let basis = range_basis(k);
    if basis.ncols() != rank {
        return Err(DppError::NumericalBreakdown(format!(
            "range basis has {} columns for trace {rank}",
            basis.ncols()
        )));
    }
    let outside = b.complement();
    let all_cols: Vec<usize> = (0..rank).collect();
    let fixed_tol = ctx.tolerances.fixed_point;

    let evaluate = |x: &Configuration| -> Result<Outcome> {
        let pts = x.indices();
        let gram = linalg::select(k.entries(), pts, pts);
        let eig = linalg::hermitian_eigenvalues(&gram);
        let gram_rank = eig.iter().filter(|&&v| v > RANK_TOL).count();
        let gram_det: f64 = eig.iter().product();
        let eval = linalg::select(&basis, pts, &all_cols);
        let injective = rank == 0
            || (pts.len() >= rank && {
                let sv = eval.clone().singular_values();
                sv.iter().fold(f64::INFINITY, |a, &s| a.min(s)) > RANK_TOL
            });
        let off = x.restrict(&outside);
        let h_space = if off.is_empty() {
            basis.clone()
        } else {
            &basis * linalg::null_space(&linalg::select(&basis, off.indices(), &all_cols), RANK_TOL)
        };
        let cond = conditional_kernel(k, x, &outside, &ctx.conditioning)?;
        let mut residual = 0.0_f64;
        let mut fixed_failure = false;
        if h_space.ncols() > 0 {
            if !cond.status.is_regular() {
                fixed_failure = true;
                residual = f64::INFINITY;
            } else {
                for c in 0..h_space.ncols() {
                    let h: CVector = CVector::from_fn(n, |i, _| {
                        if b.contains(i) { h_space[(i, c)] } else { num_complex::Complex64::new(0.0, 0.0) }
                    });
                    residual = residual.max((cond.matrix.entries() * &h - &h).norm());
                }
            }
        }
        Ok(Outcome {
            gram_failure: gram_rank != rank,
            evaluation_failure: !injective,
            fixed_point: residual,
            fixed_point_failure: fixed_failure || residual > fixed_tol,
            gram_det,
        })
    };

    let (configs, positivity_failures) = match ctx.mode {
        Mode::Exact => {
            let law = ctx.law(k)?;
            let pp = ctx.tolerances.positive_prob;
            let support: Vec<u64> = (0..law.probs.len() as u64).filter(|&s| law.probs[s as usize] > pp).collect();
            let failures = count_positivity_failures(&law, &b, pp);
            (support.into_iter().map(Configuration::from_bits).collect::<Vec<_>>(), Some(failures))
        }
        Mode::MonteCarlo => {
            ctx.require_trials()?;
            (sample_batch(k, ctx.seed, ctx.trials, "completeness")?.configs, None)
        }
    };

    let outcomes: Vec<Outcome> = configs.par_iter().map(evaluate).collect::<Result<_>>()?;
    let gram_failures = outcomes.iter().filter(|o| o.gram_failure).count();
    let eval_failures = outcomes.iter().filter(|o| o.evaluation_failure).count();
    let fixed_failures = outcomes.iter().filter(|o| o.fixed_point_failure).count();
    let fixed_max = outcomes.iter().map(|o| o.fixed_point).fold(0.0, f64::max);
    let min_det = outcomes.iter().map(|o| o.gram_det).fold(f64::INFINITY, f64::min);
    let failed_dets: Vec<f64> = outcomes.iter().filter(|o| o.gram_failure).map(|o| o.gram_det).take(20).collect();
    let total = gram_failures + eval_failures + fixed_failures + positivity_failures.unwrap_or(0);

    let mut components = vec![
        Component::new("failures", total as f64, 0.0),
        Component::new("gram_rank_failures", gram_failures as f64, 0.0),
        Component::new("evaluation_failures", eval_failures as f64, 0.0),
        Component::new("fixed_point_failures", fixed_failures as f64, 0.0),
    ];
    if let Some(f) = positivity_failures {
        components.push(Component::new("positivity_failures", f as f64, 0.0));
    }
    Ok(CheckResult::new(
        "completeness",
        ctx.mode,
        ctx.seed,
        components,
        json!({
            "n": n,
            "rank": rank,
            "window": b.indices(),
            "configurations": configs.len(),
            "min_gram_det": min_det,
            "max_fixed_point_residual": fixed_max,
            "fixed_point_tolerance": fixed_tol,
            "failed_gram_dets": failed_dets,
        }),
    ))
}
