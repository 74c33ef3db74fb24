//! Locality of conditional kernels: compression by a projection living off
//! the window, and conditioning on two disjoint windows in either order.

use serde_json::json;

use super::{check_dims, positive_traces, CheckContext, CheckResult, Component, Mode};
use crate::error::{DppError, Result};
use crate::kernel::{compress_matrix, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{self, CMatrix};
use crate::palm::{conditional_kernel, induced_kernel, palm_many, PalmMethod};
use crate::sampling::{gap_probability, sample_batch};

const PROJECTION_TOL: f64 = 1e-10;

/// Distinct traces on `window` to test: every positive-probability trace in
/// Exact mode, the traces of a sample batch in Monte Carlo mode.
fn traces_for(k: &KernelMatrix, window: &SiteSubset, ctx: &CheckContext, tag: &str) -> Result<Vec<Configuration>> {
    match ctx.mode {
        Mode::Exact => {
            let law = ctx.law(k)?;
            Ok(positive_traces(&law, window, ctx.tolerances.positive_prob).into_iter().map(|(x, _)| x).collect())
        }
        Mode::MonteCarlo => {
            ctx.require_trials()?;
            let batch = sample_batch(k, ctx.seed, ctx.trials, tag)?;
            let mut traces: Vec<Configuration> = batch.configs.iter().map(|x| x.restrict(window)).collect();
            traces.sort();
            traces.dedup();
            Ok(traces)
        }
    }
}

/// Compression by `Q + chi_B` for an orthogonal projection `Q` whose range
/// avoids the window coordinates: with `R = (Q + chi_B) K (Q + chi_B)`,
/// checks `R^{P} = (Q + chi_B) K^{P} (Q + chi_B)` for points `P ⊆ B`, the
/// induced-kernel identity `chi_C R (1 - chi_B R)^{-1} chi_C = Q [chi_C K
/// (1 - chi_B K)^{-1} chi_C] Q`, and `R^{[xi, B]} = Q K^{[xi, B]} Q` for
/// every trace `xi` on `B`.
pub fn check_local_identities(
    k: &KernelMatrix,
    b: &SiteSubset,
    q: &CMatrix,
    points: &Configuration,
    ctx: &CheckContext,
) -> Result<CheckResult> {
    check_dims(k, &[b])?;
    let n = k.n();
    if q.nrows() != n || q.ncols() != n {
        return Err(DppError::DimensionMismatch { expected: n, actual: q.nrows() });
    }
    let residual = linalg::max_abs(&(q - q.adjoint())).max(linalg::max_abs(&(q * q - q)));
    if residual > PROJECTION_TOL {
        return Err(DppError::InvalidProjection { residual });
    }
    let leak = compress_matrix(q, b, &SiteSubset::full(n));
    let leak = linalg::max_abs(&leak);
    if leak > PROJECTION_TOL {
        return Err(DppError::RangeNotDisjoint { residual: leak });
    }
    if !points.is_within(b) {
        return Err(DppError::InvalidParameter("Palm points must lie in the window".into()));
    }
    let mut p = q.clone();
    for i in b.indices() {
        p[(i, i)] += num_complex::Complex64::new(1.0, 0.0);
    }
    let wrap = |m: &CMatrix| &p * m * &p;
    let r = k.derive(&wrap(k.entries()))?;
    let tols = &ctx.conditioning;

    let palm_r = palm_many(&r, points.indices(), PalmMethod::DetRatio, tols)?;
    let palm_k = palm_many(k, points.indices(), PalmMethod::DetRatio, tols)?;
    let palm_residual = if palm_r.degenerate != palm_k.degenerate {
        f64::INFINITY
    } else {
        linalg::max_abs(&(palm_r.matrix.entries() - wrap(palm_k.matrix.entries())))
    };

    let gap = gap_probability(k, b)?;
    let mut components = vec![Component::new("palm_compression", palm_residual, ctx.tolerances.exact)];
    let induced = if gap > tols.det {
        let ir = induced_kernel(&r, b, tols)?;
        let ik = induced_kernel(k, b, tols)?;
        let res = linalg::max_abs(&(ir.matrix.entries() - q * ik.matrix.entries() * q));
        components.push(Component::new("induced_compression", res, ctx.tolerances.exact));
        Some(res)
    } else {
        None
    };

    let traces = traces_for(k, b, ctx, "local_identities")?;
    let mut local = 0.0_f64;
    for xi in &traces {
        let cr = conditional_kernel(&r, xi, b, tols)?;
        let ck = conditional_kernel(k, xi, b, tols)?;
        let res = if cr.status.is_regular() != ck.status.is_regular() {
            f64::INFINITY
        } else {
            linalg::max_abs(&(cr.matrix.entries() - q * ck.matrix.entries() * q))
        };
        local = local.max(res);
    }
    components.push(Component::new("conditional_compression", local, ctx.tolerances.exact));
    Ok(CheckResult::new(
        "local_identities",
        ctx.mode,
        ctx.seed,
        components,
        json!({
            "n": n,
            "window": b.indices(),
            "points": points.indices(),
            "q_rank": q.diagonal().iter().map(|z| z.re).sum::<f64>().round(),
            "gap_probability": gap,
            "induced_tested": induced.is_some(),
            "traces": traces.len(),
        }),
    ))
}

/// `(K^{[xi, A]})^{[xi, B]} = K^{[xi, A ∪ B]}` and the same with `A`, `B`
/// swapped, for disjoint windows and every trace on `A ∪ B`.
pub fn check_two_window_commutation(
    k: &KernelMatrix,
    a: &SiteSubset,
    b: &SiteSubset,
    ctx: &CheckContext,
) -> Result<CheckResult> {
    check_dims(k, &[a, b])?;
    if !a.is_disjoint(b) {
        return Err(DppError::WindowsOverlap);
    }
    let ab = a.union(b);
    let tols = &ctx.conditioning;
    let traces = traces_for(k, &ab, ctx, "two_window_commutation")?;
    let mut forward = 0.0_f64;
    let mut swapped = 0.0_f64;
    let mut degenerate = 0usize;
    for xi in &traces {
        let joint = conditional_kernel(k, xi, &ab, tols)?;
        if !joint.status.is_regular() {
            degenerate += 1;
            continue;
        }
        for (first, second, slot) in [(a, b, &mut forward), (b, a, &mut swapped)] {
            let inner = conditional_kernel(k, xi, first, tols)?;
            let outer = conditional_kernel(&inner.matrix, xi, second, tols)?;
            let res = if inner.status.is_regular() && outer.status.is_regular() {
                linalg::max_abs(&(outer.matrix.entries() - joint.matrix.entries()))
            } else {
                f64::INFINITY
            };
            *slot = slot.max(res);
        }
    }
    Ok(CheckResult::new(
        "two_window_commutation",
        ctx.mode,
        ctx.seed,
        vec![
            Component::new("a_then_b", forward, ctx.tolerances.exact),
            Component::new("b_then_a", swapped, ctx.tolerances.exact),
            Component::new("degenerate_positive_traces", degenerate as f64, 0.0),
        ],
        json!({ "n": k.n(), "a": a.indices(), "b": b.indices(), "traces": traces.len() }),
    ))
}
