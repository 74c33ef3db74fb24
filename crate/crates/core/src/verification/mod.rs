//! Numerical checks of the conditional-kernel identities.
//!
//! Every check returns a [`CheckResult`] made of named components. In
//! [`Mode::Exact`] expectations are sums over the enumeration oracle and
//! every trace of positive probability is visited; tolerances are fixed
//! round-off budgets. In [`Mode::MonteCarlo`] expectations are sample means
//! and a component's statistic is the largest CLT z-score, compared against
//! a multiple of the standard error.
//!
//! The top-level statistic and tolerance of a result are those of its
//! binding component, the one with the largest statistic-to-tolerance
//! ratio, so `pass` holds exactly when `statistic <= tolerance`.

pub mod corpus;
mod completeness;
mod local;
mod martingale;
mod measure;
mod sampler;
mod tail;
mod variance;

pub use completeness::check_completeness;
pub use local::{check_local_identities, check_two_window_commutation};
pub use martingale::{check_martingale_sequence, check_one_step_martingale};
pub use measure::check_measure_consistency;
pub use sampler::{check_dilation, check_sampler_agreement};
pub use tail::{check_tail_mixing, tail_windows};
pub use variance::check_variance_bound;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{DppError, Result};
use crate::kernel::{Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{CMatrix, CVector};
use crate::palm::ConditioningTolerances;
use crate::sampling::{enumerate_distribution_capped, DppDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "mc")]
    MonteCarlo,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Component {
    pub fn new(name: &str, statistic: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), statistic, tolerance, pass: statistic <= tolerance }
    }

    fn ratio(&self) -> f64 {
        if self.tolerance > 0.0 {
            self.statistic / self.tolerance
        } else if self.statistic > 0.0 {
            f64::INFINITY
        } else {
            self.statistic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub mode: Mode,
    pub statistic: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
    pub components: Vec<Component>,
    pub details: Value,
}

impl CheckResult {
    pub fn new(check_id: &str, mode: Mode, seed: u64, components: Vec<Component>, details: Value) -> Self {
        // Ties go to the earliest component.
        let binding = components
            .iter()
            .rev()
            .filter(|c| !c.statistic.is_nan())
            .max_by(|a, b| a.ratio().total_cmp(&b.ratio()));
        let nan = components.iter().any(|c| c.statistic.is_nan());
        let (statistic, tolerance) = match binding {
            Some(c) => (c.statistic, c.tolerance),
            None => (0.0, 0.0),
        };
        let pass = !nan && components.iter().all(|c| c.pass) && statistic <= tolerance;
        Self { check_id: check_id.to_string(), mode, statistic, tolerance, pass, seed, components, details }
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Tolerances shared by the checks; every field can be overridden by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Exact-mode residual budget for order-one identities.
    pub exact: f64,
    /// Exact-mode budget for the `2 x 2` minor martingale.
    pub exterior: f64,
    /// Fixed-point residual budget in the completeness check.
    pub fixed_point: f64,
    /// Monte Carlo z-score bound.
    pub mc_sigmas: f64,
    /// Allowed increase between successive tail depths, in standard errors.
    pub monotone_sigmas: f64,
    /// Traces with oracle probability at or below this count as null.
    pub positive_prob: f64,
    /// Bound on the deepest tail event statistic.
    pub tail_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exact: 1e-9,
            exterior: 1e-8,
            fixed_point: 1e-8,
            mc_sigmas: 4.0,
            monotone_sigmas: 2.0,
            positive_prob: 1e-12,
            tail_threshold: 0.01,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 7] =
        ["exact", "exterior", "fixed_point", "mc_sigmas", "monotone_sigmas", "positive_prob", "tail_threshold"];

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(DppError::InvalidParameter(format!("tolerance {key}={value} must be a nonnegative number")));
        }
        let slot = match key {
            "exact" => &mut self.exact,
            "exterior" => &mut self.exterior,
            "fixed_point" => &mut self.fixed_point,
            "mc_sigmas" => &mut self.mc_sigmas,
            "monotone_sigmas" => &mut self.monotone_sigmas,
            "positive_prob" => &mut self.positive_prob,
            "tail_threshold" => &mut self.tail_threshold,
            other => return Err(DppError::InvalidParameter(format!("unknown tolerance {other:?}"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Everything a check needs besides its mathematical inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckContext {
    pub mode: Mode,
    pub trials: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub conditioning: ConditioningTolerances,
    pub oracle_cap: usize,
}

impl CheckContext {
    pub fn exact() -> Self {
        Self {
            mode: Mode::Exact,
            trials: 0,
            seed: 0,
            tolerances: Tolerances::default(),
            conditioning: ConditioningTolerances::default(),
            oracle_cap: crate::sampling::oracle::DEFAULT_CAP,
        }
    }

    pub fn monte_carlo(trials: usize, seed: u64) -> Self {
        Self { mode: Mode::MonteCarlo, trials, seed, ..Self::exact() }
    }

    pub(crate) fn law(&self, k: &KernelMatrix) -> Result<DppDistribution> {
        enumerate_distribution_capped(k, self.oracle_cap)
    }

    pub(crate) fn require_trials(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(DppError::InvalidParameter("Monte Carlo checks need at least 2 trials".into()));
        }
        Ok(())
    }
}

/// All submasks of `mask`, including 0 and `mask`.
pub(crate) fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

/// Traces `xi ⊆ B` with `P(X ∩ B = xi) > min_prob`, in increasing bitmask
/// order, with their probabilities.
pub(crate) fn positive_traces(law: &DppDistribution, b: &SiteSubset, min_prob: f64) -> Vec<(Configuration, f64)> {
    let marginal = law.marginal(b);
    let mut out: Vec<(Configuration, f64)> = submasks(b.bits())
        .filter(|&s| marginal.probs[s as usize] > min_prob)
        .map(|s| (Configuration::from_bits(s), marginal.probs[s as usize]))
        .collect();
    out.sort_by_key(|(x, _)| x.bits());
    out
}

/// Configurations of positive probability for which, given `X ∩ B^c`, the
/// event "`B` holds as many points as `X` does" has probability at most
/// `min_prob`.
pub(crate) fn count_positivity_failures(law: &DppDistribution, b: &SiteSubset, min_prob: f64) -> usize {
    let out_mask = b.complement().bits();
    let in_mask = b.bits();
    let mut joint: std::collections::HashMap<(u64, u32), f64> = std::collections::HashMap::new();
    let mut marginal: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    for (s, &p) in law.probs.iter().enumerate() {
        let s = s as u64;
        *joint.entry((s & out_mask, (s & in_mask).count_ones())).or_default() += p;
        *marginal.entry(s & out_mask).or_default() += p;
    }
    law.probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > min_prob)
        .filter(|(s, _)| {
            let s = *s as u64;
            let tau = s & out_mask;
            let j = joint[&(tau, (s & in_mask).count_ones())];
            !(j / marginal[&tau] > min_prob)
        })
        .count()
}

/// `<M phi, phi>` for Hermitian `M`.
pub(crate) fn quad_form(m: &CMatrix, phi: &CVector) -> f64 {
    phi.dotc(&(m * phi)).re
}

/// Running first and second moments of a vector-valued sample.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, sum: vec![0.0; dim], sum_sq: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for (i, v) in x.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.count as f64).collect()
    }

    /// Standard error of each mean.
    pub fn std_error(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let var = ((q - s * s / n) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }

    /// Largest `|mean - target| / std_error` over coordinates. A coordinate
    /// with zero spread contributes 0 when its mean hits the target to
    /// round-off and infinity otherwise.
    pub fn max_z(&self, target: &[f64]) -> f64 {
        let mean = self.mean();
        let se = self.std_error();
        mean.iter()
            .zip(&se)
            .zip(target)
            .map(|((m, s), t)| z_score(m - t, *s))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn z_score(deviation: f64, se: f64) -> f64 {
    const ROUNDOFF: f64 = 1e-12;
    if deviation.abs() <= ROUNDOFF {
        0.0
    } else if se > 0.0 {
        deviation.abs() / se
    } else {
        f64::INFINITY
    }
}

pub(crate) fn flatten_real(m: &CMatrix, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * rows.len() * rows.len());
    for &i in rows {
        for &j in rows {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

pub(crate) fn check_dims(k: &KernelMatrix, sets: &[&SiteSubset]) -> Result<()> {
    for s in sets {
        if s.n() != k.n() {
            return Err(DppError::DimensionMismatch { expected: k.n(), actual: s.n() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binding_component_decides() {
        let r = CheckResult::new(
            "x",
            Mode::Exact,
            0,
            vec![Component::new("a", 1e-12, 1e-9), Component::new("b", 3.0, 4.0)],
            Value::Null,
        );
        assert!(r.pass);
        assert_eq!(r.statistic, 3.0);
        let r = CheckResult::new(
            "x",
            Mode::Exact,
            0,
            vec![Component::new("a", 2e-9, 1e-9), Component::new("b", 1.0, 0.0)],
            Value::Null,
        );
        assert!(!r.pass);
        assert_eq!(r.tolerance, 0.0);
        assert!(r.statistic > r.tolerance);
    }

    #[test]
    fn submask_enumeration() {
        let v: Vec<u64> = submasks(0b101).collect();
        assert_eq!(v, vec![0b101, 0b100, 0b001, 0]);
        assert_eq!(submasks(0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn tolerance_overrides() {
        let mut t = Tolerances::default();
        t.set("exact", 1e-7).unwrap();
        assert_eq!(t.exact, 1e-7);
        assert!(t.set("nope", 1.0).is_err());
        assert!(t.set("exact", -1.0).is_err());
    }
}
