//! Decay of the influence of far-away points on a fixed window.
//!
//! For a window `D` and growing windows `D_n ⊇ D`, conditioning on the
//! configuration outside `D_n` should matter less and less on `D`. Two
//! statistics are tracked per depth: the trace-norm distance between the
//! conditional kernel on `D` and `K` on `D`, and the difference between the
//! conditional and unconditional probabilities that `D` is empty.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use super::{check_dims, positive_traces, z_score, CheckContext, CheckResult, Component, Mode};
use crate::error::{DppError, Result};
use crate::kernel::{with_entries, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{self, Scalar};
use crate::palm::{conditional_block, Block, ConditioningTolerances};
use crate::sampling::sample_batch;

/// `D_n = D ∪ {first n sites outside D in ground order}` for each depth.
pub fn tail_windows(d: &SiteSubset, depths: &[usize]) -> Result<Vec<SiteSubset>> {
    let free = d.complement().indices();
    depths
        .iter()
        .map(|&depth| {
            if depth > free.len() {
                return Err(DppError::InvalidParameter(format!(
                    "depth {depth} exceeds the {} sites outside the window",
                    free.len()
                )));
            }
            let mut mask = d.mask().to_vec();
            for &i in &free[..depth] {
                mask[i] = true;
            }
            Ok(SiteSubset::from_mask(mask))
        })
        .collect()
}

/// Kernel and event statistics at one depth; `None` when the conditional
/// kernel degenerated.
fn statistics<T: Scalar>(
    m: &DMatrix<T>,
    x: &Configuration,
    outer: &SiteSubset,
    rows: &[usize],
    base: &DMatrix<T>,
    base_gap: f64,
    scale: f64,
    tols: &ConditioningTolerances,
) -> Option<(f64, f64)> {
    let window = outer.indices();
    let palm = x.restrict(outer);
    match conditional_block(m, palm.indices(), &window, rows, scale, tols, false) {
        Block::Regular(a, _) => {
            let kernel = linalg::trace_norm_hermitian(&(&a - base));
            let id = DMatrix::<T>::identity(rows.len(), rows.len());
            let event = (linalg::hermitian_det(&(id - a)) - base_gap).abs();
            Some((kernel, event))
        }
        Block::Degenerate(_) => None,
    }
}

/// Tail statistics at every depth: means and standard errors, checked for
/// monotone decay within `monotone_sigmas` of the paired-difference noise
/// and for a final event statistic at most `tail_threshold`.
pub fn check_tail_mixing(k: &KernelMatrix, d: &SiteSubset, depths: &[usize], ctx: &CheckContext) -> Result<CheckResult> {
    check_dims(k, &[d])?;
    if d.is_empty() {
        return Err(DppError::InvalidParameter("tail window is empty".into()));
    }
    if depths.is_empty() || depths.windows(2).any(|p| p[0] >= p[1]) {
        return Err(DppError::InvalidParameter("depths must be nonempty and strictly increasing".into()));
    }
    let grown = tail_windows(d, depths)?;
    let outers: Vec<SiteSubset> = grown.iter().map(SiteSubset::complement).collect();
    let rows = d.indices();
    let scale = k.scale();
    let tols = ctx.conditioning;
    let levels = depths.len();

    let per_config = |x: &Configuration| -> Vec<Option<(f64, f64)>> {
        with_entries!(k, |m| {
            let base = linalg::select(m, &rows, &rows);
            let id = DMatrix::identity(rows.len(), rows.len());
            let base_gap = linalg::hermitian_det(&(id - &base));
            outers
                .iter()
                .map(|outer| statistics(m, x, outer, &rows, &base, base_gap, scale, &tols))
                .collect()
        })
    };

    // Per-depth means and standard errors, and the standard error of the
    // paired change from depth j to j + 1.
    let mut kernel_mean = vec![0.0; levels];
    let mut event_mean = vec![0.0; levels];
    let mut kernel_se = vec![0.0; levels];
    let mut event_se = vec![0.0; levels];
    let mut kernel_step_se = vec![0.0; levels.saturating_sub(1)];
    let mut event_step_se = vec![0.0; levels.saturating_sub(1)];
    let mut degenerate = 0usize;
    let mut evaluated = 0usize;

    match ctx.mode {
        Mode::Exact => {
            let law = ctx.law(k)?;
            for (j, outer) in outers.iter().enumerate() {
                let traces = positive_traces(&law, outer, ctx.tolerances.positive_prob);
                let stats: Vec<(f64, Option<(f64, f64)>)> = traces
                    .par_iter()
                    .map(|(xi, p)| (*p, per_config_single(k, xi, outer, &rows, scale, &tols)))
                    .collect();
                evaluated += stats.len();
                for (p, s) in stats {
                    match s {
                        Some((kn, ev)) => {
                            kernel_mean[j] += p * kn;
                            event_mean[j] += p * ev;
                        }
                        None => degenerate += 1,
                    }
                }
            }
        }
        Mode::MonteCarlo => {
            ctx.require_trials()?;
            let batch = sample_batch(k, ctx.seed, ctx.trials, "tail_mixing")?;
            let stats: Vec<Vec<Option<(f64, f64)>>> = batch.configs.par_iter().map(per_config).collect();
            let rows_ok: Vec<Vec<(f64, f64)>> = stats
                .into_iter()
                .filter_map(|r| {
                    let ok: Option<Vec<_>> = r.into_iter().collect();
                    if ok.is_none() {
                        degenerate += 1;
                    }
                    ok
                })
                .collect();
            evaluated = rows_ok.len();
            let count = rows_ok.len() as f64;
            let mean_se = |f: &dyn Fn(&Vec<(f64, f64)>) -> f64| -> (f64, f64) {
                let mean = rows_ok.iter().map(f).sum::<f64>() / count;
                let var = rows_ok.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (count - 1.0);
                (mean, (var / count).sqrt())
            };
            for j in 0..levels {
                (kernel_mean[j], kernel_se[j]) = mean_se(&|r| r[j].0);
                (event_mean[j], event_se[j]) = mean_se(&|r| r[j].1);
                if j + 1 < levels {
                    kernel_step_se[j] = mean_se(&|r| r[j + 1].0 - r[j].0).1;
                    event_step_se[j] = mean_se(&|r| r[j + 1].1 - r[j].1).1;
                }
            }
        }
    }

    let monotone = |means: &[f64], step_se: &[f64]| -> f64 {
        (0..levels.saturating_sub(1))
            .map(|j| {
                let rise = means[j + 1] - means[j];
                match ctx.mode {
                    _ if rise <= 0.0 => 0.0,
                    Mode::Exact => rise,
                    Mode::MonteCarlo => z_score(rise, step_se[j]),
                }
            })
            .fold(0.0, f64::max)
    };
    let step_tol = match ctx.mode {
        Mode::Exact => ctx.tolerances.exact,
        Mode::MonteCarlo => ctx.tolerances.monotone_sigmas,
    };
    let components = vec![
        Component::new("kernel_monotone", monotone(&kernel_mean, &kernel_step_se), step_tol),
        Component::new("event_monotone", monotone(&event_mean, &event_step_se), step_tol),
        Component::new("final_event", event_mean[levels - 1], ctx.tolerances.tail_threshold),
        Component::new("degenerate_conditionals", degenerate as f64, 0.0),
    ];
    let per_depth: Vec<_> = (0..levels)
        .map(|j| {
            json!({
                "depth": depths[j],
                "kernel_mean": kernel_mean[j],
                "kernel_se": kernel_se[j],
                "event_mean": event_mean[j],
                "event_se": event_se[j],
            })
        })
        .collect();
    Ok(CheckResult::new(
        "tail_mixing",
        ctx.mode,
        ctx.seed,
        components,
        json!({
            "n": k.n(),
            "window": rows,
            "depths": per_depth,
            "evaluated": evaluated,
            "trials": if ctx.mode == Mode::MonteCarlo { ctx.trials } else { 0 },
        }),
    ))
}

fn per_config_single(
    k: &KernelMatrix,
    x: &Configuration,
    outer: &SiteSubset,
    rows: &[usize],
    scale: f64,
    tols: &ConditioningTolerances,
) -> Option<(f64, f64)> {
    with_entries!(k, |m| {
        let base = linalg::select(m, rows, rows);
        let id = DMatrix::identity(rows.len(), rows.len());
        let base_gap = linalg::hermitian_det(&(id - &base));
        statistics(m, x, outer, rows, &base, base_gap, scale, tols)
    })
}
