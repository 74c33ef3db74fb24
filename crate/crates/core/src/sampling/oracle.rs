//! Brute-force law of a DPP on a small ground set.
//!
//! Subsets are indexed by little-endian bitmask over the ground-set order.
//! Correlations `det K_T` are computed for every `T` and inverted with the
//! superset Moebius transform
//! `P(X = S) = sum_{T ⊇ S} (-1)^{|T \ S|} det K_T`.

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::{with_entries, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{self, Scalar};

/// Default largest ground set the oracle enumerates.
pub const DEFAULT_CAP: usize = 14;
/// Largest ground set the oracle will ever enumerate.
pub const HARD_CAP: usize = 20;
/// Round-off below this is floored to zero; anything more negative is an
/// error.
pub const NEGATIVE_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
}

fn all_correlations<T: Scalar>(m: &nalgebra::DMatrix<T>) -> Vec<f64> {
    let n = m.nrows();
    (0..1u64 << n)
        .map(|bits| {
            let idx: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
            linalg::hermitian_det(&linalg::select(m, &idx, &idx))
        })
        .collect()
}

/// In-place superset Moebius transform over `n` bits.
fn superset_mobius(values: &mut [f64], n: usize) {
    for bit in 0..n {
        let step = 1usize << bit;
        for s in 0..values.len() {
            if s & step == 0 {
                values[s] -= values[s | step];
            }
        }
    }
}

/// In-place superset zeta transform: `out[S] = sum_{T ⊇ S} values[T]`.
fn superset_sum(values: &mut [f64], n: usize) {
    for bit in 0..n {
        let step = 1usize << bit;
        for s in 0..values.len() {
            if s & step == 0 {
                values[s] += values[s | step];
            }
        }
    }
}

fn floor_probs(probs: &mut [f64]) -> Result<()> {
    for p in probs.iter_mut() {
        if *p < 0.0 {
            if *p < NEGATIVE_FLOOR {
                return Err(DppError::NotADistribution { value: *p });
            }
            *p = 0.0;
        }
    }
    Ok(())
}

/// Exact law of `P_K` for `n <= DEFAULT_CAP`.
pub fn enumerate_distribution(k: &KernelMatrix) -> Result<DppDistribution> {
    enumerate_distribution_capped(k, DEFAULT_CAP)
}

/// Exact law of `P_K` with an explicit size cap, at most [`HARD_CAP`].
pub fn enumerate_distribution_capped(k: &KernelMatrix, cap: usize) -> Result<DppDistribution> {
    let cap = cap.min(HARD_CAP);
    let n = k.n();
    if n > cap {
        return Err(DppError::TooLarge { n, cap });
    }
    let mut probs = with_entries!(k, |m| all_correlations(m));
    superset_mobius(&mut probs, n);
    floor_probs(&mut probs)?;
    Ok(DppDistribution { n, probs })
}

impl DppDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn probability(&self, x: &Configuration) -> f64 {
        self.probs[x.bits() as usize]
    }

    /// `P(T ⊆ X)` for every `T`, by summing over supersets.
    pub fn correlations(&self) -> Vec<f64> {
        let mut c = self.probs.clone();
        superset_sum(&mut c, self.n);
        c
    }

    /// `P(X ∩ B = xi)`.
    pub fn trace_probability(&self, b: &SiteSubset, xi: &Configuration) -> f64 {
        let mask = b.bits() as usize;
        let target = xi.bits() as usize;
        self.probs
            .iter()
            .enumerate()
            .filter(|(s, _)| s & mask == target)
            .map(|(_, p)| p)
            .sum()
    }

    /// Law of `X ∩ W`, indexed by the full-width bitmask of the trace.
    pub fn marginal(&self, w: &SiteSubset) -> DppDistribution {
        let mask = w.bits() as usize;
        let mut probs = vec![0.0; self.probs.len()];
        for (s, &p) in self.probs.iter().enumerate() {
            probs[s & mask] += p;
        }
        DppDistribution { n: self.n, probs }
    }

    /// Law of `X ∩ B^c` given `X ∩ B = xi`.
    pub fn condition_on_window(&self, b: &SiteSubset, xi: &Configuration, min_prob: f64) -> Result<DppDistribution> {
        if !xi.is_within(b) {
            return Err(DppError::InvalidParameter("trace configuration leaves the window".into()));
        }
        let mask = b.bits() as usize;
        let target = xi.bits() as usize;
        let mass = self.trace_probability(b, xi);
        if !(mass > min_prob) {
            return Err(DppError::ZeroProbabilityCondition { prob: mass });
        }
        let mut probs = vec![0.0; self.probs.len()];
        for (s, &p) in self.probs.iter().enumerate() {
            if s & mask == target {
                probs[s & !mask] = p / mass;
            }
        }
        Ok(DppDistribution { n: self.n, probs })
    }

    /// Total variation distance `(1/2) sum |p - q|`.
    pub fn tv(&self, other: &DppDistribution) -> Result<f64> {
        if self.n != other.n {
            return Err(DppError::DimensionMismatch { expected: self.n, actual: other.n });
        }
        Ok(0.5 * self.probs.iter().zip(&other.probs).map(|(p, q)| (p - q).abs()).sum::<f64>())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("distributions serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text).map_err(|e| DppError::Parse(e.to_string()))?;
        if d.n > HARD_CAP || d.probs.len() != 1usize << d.n {
            return Err(DppError::Parse(format!("{} probabilities for n = {}", d.probs.len(), d.n)));
        }
        Ok(d)
    }
}

/// `det(1 - K_BB)`, the probability that `B` is empty.
pub fn gap_probability(k: &KernelMatrix, b: &SiteSubset) -> Result<f64> {
    if b.n() != k.n() {
        return Err(DppError::DimensionMismatch { expected: k.n(), actual: b.n() });
    }
    let idx = b.indices();
    Ok(with_entries!(k, |m| {
        let sub = linalg::select(m, &idx, &idx);
        linalg::hermitian_det(&(nalgebra::DMatrix::identity(idx.len(), idx.len()) - sub))
    }))
}

/// `det K_T = P(T ⊆ X)`.
pub fn correlation(k: &KernelMatrix, t: &Configuration) -> Result<f64> {
    if let Some(&last) = t.indices().last() {
        if last >= k.n() {
            return Err(DppError::IndexOutOfRange { index: last, n: k.n() });
        }
    }
    Ok(with_entries!(k, |m| linalg::hermitian_det(&linalg::select(m, t.indices(), t.indices()))))
}

/// Conditional law of `X ∩ B^c` given `X ∩ B = xi`, by Bayes over the full
/// enumeration.
pub fn conditional_distribution_oracle(
    k: &KernelMatrix,
    b: &SiteSubset,
    xi: &Configuration,
    min_prob: f64,
) -> Result<DppDistribution> {
    enumerate_distribution(k)?.condition_on_window(b, xi, min_prob)
}

/// Reduced Palm law at `points`: `P(X \ P = S) ∝ P(X = S ∪ P)` for `S`
/// disjoint from the points, normalized by `det K_P`.
pub fn palm_distribution_oracle(k: &KernelMatrix, points: &Configuration, min_corr: f64) -> Result<DppDistribution> {
    let law = enumerate_distribution(k)?;
    let p = points.bits() as usize;
    let mass: f64 = law.probs.iter().enumerate().filter(|(s, _)| s & p == p).map(|(_, q)| q).sum();
    if !(mass > min_corr) {
        return Err(DppError::ZeroCorrelation { corr: mass });
    }
    let mut probs = vec![0.0; law.probs.len()];
    for (s, &q) in law.probs.iter().enumerate() {
        if s & p == p {
            probs[s & !p] = q / mass;
        }
    }
    Ok(DppDistribution { n: law.n, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::factory;

    #[test]
    fn rank_one_two_sites() {
        let d = enumerate_distribution(&factory::uniform_rank1(2).unwrap()).unwrap();
        assert!(d.probs[0].abs() < 1e-15);
        assert!((d.probs[1] - 0.5).abs() < 1e-15);
        assert!((d.probs[2] - 0.5).abs() < 1e-15);
        assert!(d.probs[3].abs() < 1e-15);
    }

    #[test]
    fn diagonal_is_product_bernoulli() {
        let p = [0.3, 0.6, 0.9];
        let d = enumerate_distribution(&factory::diagonal(&p).unwrap()).unwrap();
        for s in 0..8usize {
            let expected: f64 = (0..3).map(|i| if s >> i & 1 == 1 { p[i] } else { 1.0 - p[i] }).product();
            assert!((d.probs[s] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert_eq!(
            enumerate_distribution(&factory::zero(15)).unwrap_err(),
            DppError::TooLarge { n: 15, cap: 14 }
        );
        assert_eq!(
            enumerate_distribution_capped(&factory::zero(21), 30).unwrap_err(),
            DppError::TooLarge { n: 21, cap: 20 }
        );
    }

    #[test]
    fn gap_and_correlation_examples() {
        let h = factory::uniform_rank1(2).unwrap();
        assert_eq!(gap_probability(&h, &SiteSubset::empty(2)).unwrap(), 1.0);
        let b = SiteSubset::from_indices(2, &[0]).unwrap();
        assert!((gap_probability(&h, &b).unwrap() - 0.5).abs() < 1e-15);
        let k = factory::diagonal(&[1.0, 0.5]).unwrap();
        assert_eq!(gap_probability(&k, &b).unwrap(), 0.0);

        assert_eq!(correlation(&h, &Configuration::empty()).unwrap(), 1.0);
        assert!(correlation(&h, &Configuration::new(vec![0, 1], 2).unwrap()).unwrap().abs() < 1e-15);
        let d = factory::diagonal(&[0.3, 0.5]).unwrap();
        assert!((correlation(&d, &Configuration::new(vec![0], 2).unwrap()).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn conditional_and_palm_slices() {
        let h = factory::uniform_rank1(2).unwrap();
        let b = SiteSubset::from_indices(2, &[0]).unwrap();
        let c = conditional_distribution_oracle(&h, &b, &Configuration::empty(), 1e-12).unwrap();
        assert!((c.probs[2] - 1.0).abs() < 1e-15);
        let p = palm_distribution_oracle(&h, &Configuration::new(vec![0], 2).unwrap(), 1e-12).unwrap();
        assert!((p.probs[0] - 1.0).abs() < 1e-15);
        let k = factory::diagonal(&[1.0, 0.5]).unwrap();
        assert!(matches!(
            conditional_distribution_oracle(&k, &b, &Configuration::empty(), 1e-12),
            Err(DppError::ZeroProbabilityCondition { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let d = enumerate_distribution(&factory::diagonal(&[0.1, 0.7]).unwrap()).unwrap();
        assert_eq!(DppDistribution::from_json(&d.to_json()).unwrap(), d);
        assert!(DppDistribution::from_json(r#"{"n":2,"probs":[1.0]}"#).is_err());
    }
}
