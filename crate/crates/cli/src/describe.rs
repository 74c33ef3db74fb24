//! One-paragraph summaries of kernels.

use dppcond::KernelMatrix;
use serde_json::json;

/// Human-readable summary: the first line reads like
/// `n=2, rank 1 projection, trace 1.0`.
pub fn describe(k: &KernelMatrix) -> String {
    let spectrum = k.spectrum();
    let trace = tidy(k.trace());
    let headline = if k.is_projection() {
        format!("n={}, rank {} projection, trace {trace:?}", k.n(), k.rank(0.5))
    } else {
        format!("n={}, not a projection, trace {trace:?}", k.n())
    };
    let (min, max) = extremes(spectrum);
    format!(
        "{headline}\nentries: {}\nspectrum: min {:?}, max {:?}, {} eigenvalues above 1e-12\nclipped eigenvalue excess: {:e}",
        if k.is_real() { "real" } else { "complex" },
        tidy(min),
        tidy(max),
        k.rank(1e-12),
        k.clip_excess(),
    )
}

/// The same summary as JSON.
pub fn describe_json(k: &KernelMatrix) -> serde_json::Value {
    let (min, max) = extremes(k.spectrum());
    json!({
        "n": k.n(),
        "complex": !k.is_real(),
        "projection": k.is_projection(),
        "trace": k.trace(),
        "spectrum": k.spectrum(),
        "spectrum_min": min,
        "spectrum_max": max,
        "clip_excess": k.clip_excess(),
    })
}

fn extremes(spectrum: &[f64]) -> (f64, f64) {
    spectrum.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Rounds away floating-point noise so that `0.30000000000000004 + 0.5`
/// prints as `0.8`.
fn tidy(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}
