//! Randomized kernel corpora and random check inputs.
//!
//! Entry `i` of a corpus is drawn from stream `i` of the corpus seed, so
//! entries can be regenerated individually and corpora of different sizes
//! share their common prefix.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::{factory, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{CMatrix, CVector};
use crate::sampling::trial_rng;

/// Eigenvalue at distance `1e-6` below one, for the near-singular class.
pub const NEAR_ONE: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusClass {
    /// Random real projection of rank `1..n`.
    Projection,
    /// Real kernel with eigenvalues uniform on `[0, 1]`.
    Contraction,
    /// Diagonal kernel with uniform entries.
    Diagonal,
    /// Complex Hermitian kernel with eigenvalues uniform on `[0, 1]`.
    Complex,
    /// Real kernel with one eigenvalue exactly 1 and one exactly 0.
    EigenvalueOne,
    /// Real kernel with one eigenvalue at `1 - 1e-6`.
    NearOne,
}

impl CorpusClass {
    pub const ALL: [CorpusClass; 6] = [
        CorpusClass::Projection,
        CorpusClass::Contraction,
        CorpusClass::Diagonal,
        CorpusClass::Complex,
        CorpusClass::EigenvalueOne,
        CorpusClass::NearOne,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CorpusClass::Projection => "projection",
            CorpusClass::Contraction => "contraction",
            CorpusClass::Diagonal => "diagonal",
            CorpusClass::Complex => "complex",
            CorpusClass::EigenvalueOne => "eigenvalue_one",
            CorpusClass::NearOne => "near_one",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let normalized = name.trim().replace(['-', ' '], "_").replace("eigenvalue=1", "eigenvalue_one");
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == normalized)
            .ok_or_else(|| DppError::InvalidParameter(format!("unknown corpus class {name:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub index: usize,
    pub class: CorpusClass,
    pub kernel: KernelMatrix,
}

impl CorpusEntry {
    pub fn label(&self) -> String {
        format!("{:04}_{}_n{}", self.index, self.class.name(), self.kernel.n())
    }
}

/// One kernel of the given class and size.
pub fn random_kernel<R: Rng + ?Sized>(class: CorpusClass, n: usize, rng: &mut R) -> Result<KernelMatrix> {
    if n == 0 {
        return Err(DppError::InvalidParameter("kernels need at least one site".into()));
    }
    let uniform = |rng: &mut R, len: usize| -> Vec<f64> { (0..len).map(|_| rng.random::<f64>()).collect() };
    match class {
        CorpusClass::Projection => {
            let rank = if n == 1 { 1 } else { rng.random_range(1..n) };
            factory::random_projection(n, rank, rng)
        }
        CorpusClass::Contraction => factory::random_contraction(n, rng),
        CorpusClass::Diagonal => factory::diagonal(&uniform(rng, n)),
        CorpusClass::Complex => {
            let spectrum = uniform(rng, n);
            factory::with_spectrum(&spectrum, true, rng)
        }
        CorpusClass::EigenvalueOne => {
            let mut spectrum = uniform(rng, n);
            spectrum[0] = 1.0;
            if n > 2 {
                spectrum[1] = 0.0;
            }
            factory::with_spectrum(&spectrum, false, rng)
        }
        CorpusClass::NearOne => {
            let mut spectrum = uniform(rng, n);
            spectrum[0] = NEAR_ONE;
            factory::with_spectrum(&spectrum, false, rng)
        }
    }
}

/// `count` kernels with sizes uniform in `n_min..=n_max`, cycling through
/// `classes` in order.
pub fn random_corpus(seed: u64, count: usize, n_min: usize, n_max: usize, classes: &[CorpusClass]) -> Result<Vec<CorpusEntry>> {
    if n_min == 0 || n_min > n_max {
        return Err(DppError::InvalidParameter(format!("bad size range {n_min}..={n_max}")));
    }
    if classes.is_empty() && count > 0 {
        return Err(DppError::InvalidParameter("no corpus classes given".into()));
    }
    (0..count)
        .map(|index| {
            let mut rng = trial_rng(seed, index as u64);
            let class = classes[index % classes.len()];
            let n = rng.random_range(n_min..=n_max);
            Ok(CorpusEntry { index, class, kernel: random_kernel(class, n, &mut rng)? })
        })
        .collect()
}

/// Nonempty window chosen uniformly among subsets of size `1..n` (the whole
/// set when `n = 1`).
pub fn random_window<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SiteSubset {
    if n == 1 {
        return SiteSubset::full(1);
    }
    let size = rng.random_range(1..n);
    random_window_of_size(n, size, rng)
}

pub fn random_window_of_size<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> SiteSubset {
    let mut sites: Vec<usize> = (0..n).collect();
    sites.shuffle(rng);
    SiteSubset::from_indices(n, &sites[..size.min(n)]).expect("indices in range")
}

/// Two disjoint nonempty windows for `n >= 2`, covering at most `n - 1`
/// sites when `n >= 3`.
pub fn random_disjoint_windows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(SiteSubset, SiteSubset)> {
    if n < 2 {
        return Err(DppError::InvalidParameter("two disjoint windows need n >= 2".into()));
    }
    let mut sites: Vec<usize> = (0..n).collect();
    sites.shuffle(rng);
    let budget = if n >= 3 { n - 1 } else { n };
    let total = rng.random_range(2..=budget);
    let split = rng.random_range(1..total);
    Ok((
        SiteSubset::from_indices(n, &sites[..split])?,
        SiteSubset::from_indices(n, &sites[split..total])?,
    ))
}

/// `stages` strictly nested nonempty windows inside a window `W` that
/// leaves at least one site free, as `(windows, W)`. Needs
/// `n >= stages + 1`.
pub fn random_nested_windows<R: Rng + ?Sized>(n: usize, stages: usize, rng: &mut R) -> Result<(Vec<SiteSubset>, SiteSubset)> {
    if stages == 0 || n < stages + 1 {
        return Err(DppError::InvalidParameter(format!("{stages} nested windows need n >= {}", stages + 1)));
    }
    let mut sites: Vec<usize> = (0..n).collect();
    sites.shuffle(rng);
    let w_size = rng.random_range(stages..n);
    let mut cuts: Vec<usize> = (1..=w_size).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..stages - 1].to_vec();
    cuts.push(w_size);
    cuts.sort_unstable();
    let cuts: Vec<usize> = {
        let mut c = cuts;
        c.dedup();
        c
    };
    let mut windows: Vec<SiteSubset> = cuts.iter().map(|&c| SiteSubset::from_indices(n, &sites[..c])).collect::<Result<_>>()?;
    while windows.len() < stages {
        windows.insert(0, windows[0].clone());
    }
    let w = SiteSubset::from_indices(n, &sites[..w_size])?;
    Ok((windows, w))
}

/// Gaussian test function supported on `support`, complex when asked.
pub fn random_test_function<R: Rng + ?Sized>(support: &SiteSubset, complex: bool, rng: &mut R) -> CVector {
    CVector::from_fn(support.n(), |i, _| {
        if support.contains(i) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
            num_complex::Complex64::new(re, im)
        } else {
            num_complex::Complex64::new(0.0, 0.0)
        }
    })
}

/// Random projection of rank `1..=|B^c|` (capped at `max_rank`) whose range
/// avoids the window.
pub fn random_outside_projection<R: Rng + ?Sized>(window: &SiteSubset, max_rank: usize, rng: &mut R) -> Result<CMatrix> {
    let free = window.n() - window.len();
    if free == 0 {
        return Ok(CMatrix::zeros(window.n(), window.n()));
    }
    let rank = rng.random_range(1..=free.min(max_rank.max(1)));
    factory::random_projection_avoiding(window, rank, rng)
}

/// Random subset of the window's sites, as Palm points.
pub fn random_points_in<R: Rng + ?Sized>(window: &SiteSubset, max_points: usize, rng: &mut R) -> Configuration {
    let mut sites = window.indices();
    sites.shuffle(rng);
    let count = rng.random_range(0..=sites.len().min(max_points));
    Configuration::from_unsorted(sites[..count].to_vec(), window.n()).expect("distinct sites")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_reproducible_and_classed() {
        let a = random_corpus(42, 12, 2, 8, &CorpusClass::ALL).unwrap();
        let b = random_corpus(42, 12, 2, 8, &CorpusClass::ALL).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.kernel.entries(), y.kernel.entries());
            assert_eq!(x.class, y.class);
        }
        assert_eq!(a[0].class, CorpusClass::Projection);
        assert!(a[0].kernel.is_projection());
        assert!(!a[3].kernel.is_real());
        let top = *a[4].kernel.spectrum().last().unwrap();
        assert!((top - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_names_parse() {
        for c in CorpusClass::ALL {
            assert_eq!(CorpusClass::parse(c.name()).unwrap(), c);
        }
        assert_eq!(CorpusClass::parse("eigenvalue=1").unwrap(), CorpusClass::EigenvalueOne);
        assert!(CorpusClass::parse("banana").is_err());
    }

    #[test]
    fn nested_windows_are_nested() {
        let mut rng = trial_rng(1, 2);
        for n in 4..9 {
            let (ws, w) = random_nested_windows(n, 3, &mut rng).unwrap();
            assert_eq!(ws.len(), 3);
            assert!(ws.windows(2).all(|p| p[0].is_subset(&p[1])));
            assert!(ws[2].is_subset(&w));
            assert!(w.len() < n);
        }
    }

    #[test]
    fn disjoint_windows_are_disjoint() {
        let mut rng = trial_rng(1, 3);
        for n in 2..9 {
            let (a, b) = random_disjoint_windows(n, &mut rng).unwrap();
            assert!(a.is_disjoint(&b));
            assert!(!a.is_empty() && !b.is_empty());
        }
    }
}
