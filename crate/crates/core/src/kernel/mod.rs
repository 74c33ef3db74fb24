//! Validated kernel objects on a finite ground set.
//!
//! A [`KernelMatrix`] is a Hermitian matrix with spectrum in `[0, 1]`: the
//! finite form of a positive contraction on `L^2(E, mu)`, with each site of
//! the ground set carrying the quadrature weight of `mu`. Every site is
//! treated as a point where the kernel is defined; there are no null sets to
//! model in finite dimensions.

pub mod factory;
pub mod io;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::linalg::{self, CMatrix, CVector, Scalar};

/// Runs `$body` with `$m` bound to the real copy of the kernel entries when
/// one exists, otherwise to the complex entries.
macro_rules! with_entries {
    ($k:expr, |$m:ident| $body:expr) => {
        match $k.real_entries() {
            Some($m) => $body,
            None => {
                let $m = $k.entries();
                $body
            }
        }
    };
}
pub(crate) use with_entries;

/// Ordered finite set of sites, optionally embedded in `R^d` with positive
/// quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundSet {
    labels: Vec<String>,
    coords: Option<Vec<Vec<f64>>>,
    weights: Option<Vec<f64>>,
}

impl GroundSet {
    pub fn new(
        labels: Vec<String>,
        coords: Option<Vec<Vec<f64>>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(DppError::InvalidGroundSet(format!("duplicate label {l:?}")));
            }
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(DppError::InvalidGroundSet(format!(
                    "{} coordinate rows for {n} sites",
                    c.len()
                )));
            }
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(DppError::InvalidGroundSet(format!(
                    "{} weights for {n} sites",
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
                return Err(DppError::InvalidGroundSet(format!(
                    "weight {bad} is not strictly positive"
                )));
            }
        }
        Ok(Self { labels, coords, weights })
    }

    /// Sites labelled `0..n` with no embedding.
    pub fn indexed(n: usize) -> Self {
        Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
            coords: None,
            weights: None,
        }
    }

    /// Sites with coordinates and weights, labelled by index.
    pub fn embedded(coords: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let labels = (0..coords.len()).map(|i| i.to_string()).collect();
        Self::new(labels, Some(coords), Some(weights))
    }

    /// Midpoint grid of `n` cells on `[a, b]`, each weighted by the cell width.
    pub fn uniform_interval(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 || !(b > a) {
            return Err(DppError::InvalidGroundSet(format!("bad interval grid n={n} [{a}, {b}]")));
        }
        let h = (b - a) / n as f64;
        let coords = (0..n).map(|i| vec![a + (i as f64 + 0.5) * h]).collect();
        Self::embedded(coords, vec![h; n])
    }

    /// Polar midpoint grid of the disk of radius `radius`: `rings` annuli of
    /// equal width, each cut into `sectors` cells weighted by their area.
    pub fn polar_disk(rings: usize, sectors: usize, radius: f64) -> Result<Self> {
        if rings == 0 || sectors == 0 || !(radius > 0.0) {
            return Err(DppError::InvalidGroundSet("bad disk grid".into()));
        }
        let dr = radius / rings as f64;
        let dt = std::f64::consts::TAU / sectors as f64;
        let mut coords = Vec::with_capacity(rings * sectors);
        let mut weights = Vec::with_capacity(rings * sectors);
        for i in 0..rings {
            let r = (i as f64 + 0.5) * dr;
            for j in 0..sectors {
                let t = (j as f64 + 0.5) * dt;
                coords.push(vec![r * t.cos(), r * t.sin()]);
                weights.push(r * dr * dt);
            }
        }
        Self::embedded(coords, weights)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }
}

/// Tolerances used when validating a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTolerances {
    /// Largest admissible `|M - M*|` entry.
    pub hermitian: f64,
    /// Width of the eigenvalue clipping window around `[0, 1]`, also used
    /// for the projection test `|M^2 - M| <= spectral`.
    pub spectral: f64,
}

impl Default for KernelTolerances {
    fn default() -> Self {
        Self { hermitian: 1e-9, spectral: 1e-8 }
    }
}

/// A Hermitian positive contraction on a finite ground set.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    entries: CMatrix,
    real: Option<DMatrix<f64>>,
    spectrum: Vec<f64>,
    is_projection: bool,
    clip_excess: f64,
    tolerances: KernelTolerances,
}

impl PartialEq for KernelMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.is_projection == other.is_projection
    }
}

/// Eigenvalue excursions this small are round-off from an exact
/// reconstruction; clipping them would only reintroduce the same noise.
fn roundoff_floor(n: usize) -> f64 {
    64.0 * f64::EPSILON * (n.max(1) as f64)
}

/// Validates a raw square matrix as a DPP kernel.
///
/// The Hermitian part `(M + M*)/2` is kept. Eigenvalues within
/// `tols.spectral` of `[0, 1]` are clipped into it; anything further out is
/// rejected.
pub fn validate_kernel(raw: &CMatrix, tols: KernelTolerances) -> Result<KernelMatrix> {
    if raw.nrows() != raw.ncols() {
        return Err(DppError::DimensionMismatch { expected: raw.nrows(), actual: raw.ncols() });
    }
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DppError::NonFinite);
    }
    let asymmetry = linalg::max_abs(&(raw - raw.adjoint()));
    if asymmetry > tols.hermitian {
        return Err(DppError::NotHermitian { asymmetry, tol: tols.hermitian });
    }
    let herm = linalg::hermitian_part(raw);
    if herm.iter().all(|z| z.im == 0.0) {
        let re = herm.map(|z| z.re);
        finish_validation(re, tols)
    } else {
        finish_validation(herm, tols)
    }
}

fn finish_validation<T: Scalar>(herm: DMatrix<T>, tols: KernelTolerances) -> Result<KernelMatrix> {
    let n = herm.nrows();
    let (values, vectors) = linalg::hermitian_eigen(&herm);
    let mut excess = 0.0_f64;
    for &v in &values {
        if v < -tols.spectral || v > 1.0 + tols.spectral {
            return Err(DppError::SpectrumOutOfRange { eigenvalue: v, tol: tols.spectral });
        }
        excess = excess.max(-v).max(v - 1.0);
    }
    let clipped: Vec<f64> = values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let matrix = if excess > roundoff_floor(n) {
        linalg::hermitian_part(&linalg::from_spectrum(&clipped, &vectors))
    } else {
        herm
    };
    let is_projection = linalg::max_abs(&(&matrix * &matrix - &matrix)) <= tols.spectral;
    let entries = linalg::lift(&matrix);
    let real = if entries.iter().all(|z| z.im == 0.0) {
        Some(entries.map(|z| z.re))
    } else {
        None
    };
    Ok(KernelMatrix {
        entries,
        real,
        spectrum: clipped,
        is_projection,
        clip_excess: excess.max(0.0),
        tolerances: tols,
    })
}

impl KernelMatrix {
    /// Validates a real symmetric matrix with default tolerances.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        validate_kernel(&linalg::lift(m), KernelTolerances::default())
    }

    /// Validates a complex matrix with default tolerances.
    pub fn from_complex(m: &CMatrix) -> Result<Self> {
        validate_kernel(m, KernelTolerances::default())
    }

    /// Row-major real entries.
    pub fn from_rows(n: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(DppError::DimensionMismatch { expected: n * n, actual: rows.len() });
        }
        Self::from_real(&DMatrix::from_row_slice(n, n, rows))
    }

    /// Re-validates a derived matrix using this kernel's tolerances.
    pub(crate) fn derive(&self, m: &CMatrix) -> Result<Self> {
        validate_kernel(m, self.tolerances).map_err(|e| match e {
            DppError::SpectrumOutOfRange { eigenvalue, .. } => DppError::NumericalBreakdown(
                format!("derived kernel has eigenvalue {eigenvalue:.3e} outside [0, 1]"),
            ),
            other => other,
        })
    }

    pub(crate) fn zero_like(&self) -> Self {
        let n = self.n();
        Self {
            entries: CMatrix::zeros(n, n),
            real: Some(DMatrix::zeros(n, n)),
            spectrum: vec![0.0; n],
            is_projection: true,
            clip_excess: 0.0,
            tolerances: self.tolerances,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Real copy of the entries when the kernel is real symmetric.
    pub fn real_entries(&self) -> Option<&DMatrix<f64>> {
        self.real.as_ref()
    }

    pub fn is_real(&self) -> bool {
        self.real.is_some()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    /// Eigenvalues in ascending order, clipped into `[0, 1]`.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn is_projection(&self) -> bool {
        self.is_projection
    }

    /// Largest distance by which a raw eigenvalue fell outside `[0, 1]`.
    pub fn clip_excess(&self) -> f64 {
        self.clip_excess
    }

    pub fn tolerances(&self) -> KernelTolerances {
        self.tolerances
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.entries[(i, i)].re).sum()
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.spectrum.iter().filter(|&&v| v > tol).count()
    }

    /// Diagonal scale used to make degeneracy thresholds relative.
    pub(crate) fn scale(&self) -> f64 {
        (0..self.n())
            .map(|i| self.entries[(i, i)].re)
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE)
    }
}

/// Boolean mask over the ground set: a window `B` and the multiplication
/// operator `chi_B`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteSubset {
    mask: Vec<bool>,
}

impl SiteSubset {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(DppError::IndexOutOfRange { index: i, n });
            }
            mask[i] = true;
        }
        Ok(Self { mask })
    }

    /// Sites `start..end`.
    pub fn range(n: usize, start: usize, end: usize) -> Result<Self> {
        if end > n || start > end {
            return Err(DppError::IndexOutOfRange { index: end, n });
        }
        Ok(Self { mask: (0..n).map(|i| i >= start && i < end).collect() })
    }

    pub fn full(n: usize) -> Self {
        Self { mask: vec![true; n] }
    }

    pub fn empty(n: usize) -> Self {
        Self { mask: vec![false; n] }
    }

    /// Site set encoded by the low `n` bits of `bits`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        Self { mask: (0..n).map(|i| bits >> i & 1 == 1).collect() }
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn complement(&self) -> Self {
        Self { mask: self.mask.iter().map(|b| !b).collect() }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect() }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect() }
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self { mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && !*b).collect() }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !(*a && *b))
    }

    /// Little-endian bitmask; requires `n <= 64`.
    pub fn bits(&self) -> u64 {
        debug_assert!(self.mask.len() <= 64);
        self.mask
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| if b { acc | 1 << i } else { acc })
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.mask.len() != n {
            return Err(DppError::DimensionMismatch { expected: n, actual: self.mask.len() });
        }
        Ok(())
    }
}

/// A finite simple configuration: strictly increasing site indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    indices: Vec<usize>,
}

impl Configuration {
    /// Validates strictly increasing indices below `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(DppError::InvalidParameter(format!(
                    "configuration indices not strictly increasing: {:?}",
                    indices
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(DppError::IndexOutOfRange { index: last, n });
            }
        }
        Ok(Self { indices })
    }

    /// Sorts and validates; duplicates are rejected.
    pub fn from_unsorted(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(DppError::DuplicatePoint(w[0]));
        }
        Self::new(indices, n)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: u64) -> Self {
        Self { indices: (0..64).filter(|i| bits >> i & 1 == 1).collect() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// `X ∩ B`.
    pub fn restrict(&self, window: &SiteSubset) -> Self {
        Self { indices: self.indices.iter().copied().filter(|&i| window.contains(i)).collect() }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut v: Vec<usize> = self.indices.iter().chain(&other.indices).copied().collect();
        v.sort_unstable();
        v.dedup();
        Self { indices: v }
    }

    pub fn bits(&self) -> u64 {
        self.indices.iter().fold(0u64, |acc, &i| acc | 1 << i)
    }

    pub fn is_within(&self, window: &SiteSubset) -> bool {
        self.indices.iter().all(|&i| window.contains(i))
    }
}

/// `chi_A K chi_B` as a full-size zero-padded matrix.
pub fn compress(k: &KernelMatrix, a: &SiteSubset, b: &SiteSubset) -> Result<CMatrix> {
    a.check_len(k.n())?;
    b.check_len(k.n())?;
    Ok(compress_matrix(k.entries(), a, b))
}

pub(crate) fn compress_matrix(m: &CMatrix, a: &SiteSubset, b: &SiteSubset) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        if a.contains(i) && b.contains(j) {
            m[(i, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// The function `K_x = K(., x)`.
pub fn kernel_column(k: &KernelMatrix, x: usize) -> Result<CVector> {
    if x >= k.n() {
        return Err(DppError::IndexOutOfRange { index: x, n: k.n() });
    }
    Ok(k.entries().column(x).into_owned())
}

/// Projection dilation on the doubled ground set,
/// `[[K, S], [S, 1 - K]]` with `S` the principal square root of `K - K^2`.
pub fn dilate_to_projection(k: &KernelMatrix) -> Result<KernelMatrix> {
    let tols = k.tolerances();
    let dilated: CMatrix = with_entries!(k, |m| {
        let n = m.nrows();
        // Taking the root in the eigenbasis of K keeps S commuting with K;
        // a root of the computed K - K^2 would mix the 0 and 1 eigenspaces.
        let (values, vectors) = linalg::hermitian_eigen(m);
        let mut roots = Vec::with_capacity(n);
        for &v in values.iter() {
            let defect = v - v * v;
            if defect < -tols.spectral {
                return Err(DppError::SquareRootFailure { eigenvalue: defect });
            }
            let v = v.clamp(0.0, 1.0);
            roots.push((v * (1.0 - v)).sqrt());
        }
        let s = linalg::hermitian_part(&linalg::from_spectrum(&roots, &vectors));
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(m);
        out.view_mut((0, n), (n, n)).copy_from(&s);
        out.view_mut((n, 0), (n, n)).copy_from(&s);
        let complement = DMatrix::identity(n, n) - m;
        out.view_mut((n, n), (n, n)).copy_from(&complement);
        linalg::lift(&out)
    });
    let out = k.derive(&dilated)?;
    if !out.is_projection() {
        return Err(DppError::NumericalBreakdown("dilation is not idempotent".into()));
    }
    Ok(out)
}

/// Discretizes a kernel function on a weighted grid:
/// entries `w_i^{1/2} f(x_i, x_j) w_j^{1/2}`, then validation with clipping.
/// The clipped magnitude is reported by [`KernelMatrix::clip_excess`].
pub fn discretize_kernel<F>(kernel_fn: F, grid: &GroundSet, tols: KernelTolerances) -> Result<KernelMatrix>
where
    F: Fn(&[f64], &[f64]) -> Complex64,
{
    let coords = grid
        .coords()
        .ok_or_else(|| DppError::InvalidGroundSet("discretization needs coordinates".into()))?;
    let weights = grid
        .weights()
        .ok_or_else(|| DppError::InvalidGroundSet("discretization needs weights".into()))?;
    let n = grid.len();
    let raw = CMatrix::from_fn(n, n, |i, j| {
        kernel_fn(&coords[i], &coords[j]) * (weights[i] * weights[j]).sqrt()
    });
    validate_kernel(&raw, tols)
}

/// Orthogonal projection onto the span of eigenvectors with eigenvalue
/// above `rank_tol`.
pub fn range_projector(k: &KernelMatrix, rank_tol: f64) -> Result<KernelMatrix> {
    let proj: CMatrix = with_entries!(k, |m| {
        let (values, vectors) = linalg::hermitian_eigen(m);
        let ind: Vec<f64> = values.iter().map(|&v| if v > rank_tol { 1.0 } else { 0.0 }).collect();
        linalg::lift(&linalg::hermitian_part(&linalg::from_spectrum(&ind, &vectors)))
    });
    k.derive(&proj)
}

/// Orthonormal basis of `Ran K` for a projection kernel: eigenvectors with
/// eigenvalue above one half.
pub(crate) fn range_basis(k: &KernelMatrix) -> CMatrix {
    with_entries!(k, |m| {
        let (values, vectors) = linalg::hermitian_eigen(m);
        let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.5).collect();
        let basis = linalg::select(&vectors, &(0..m.nrows()).collect::<Vec<_>>(), &keep);
        linalg::lift(&basis)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn identity_is_projection() {
        let k = KernelMatrix::from_real(&DMatrix::identity(2, 2)).unwrap();
        assert!(k.is_projection());
        assert!(k.is_real());
    }

    #[test]
    fn half_ones_is_projection() {
        let k = KernelMatrix::from_rows(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(k.is_projection());
        assert!((k.spectrum()[0]).abs() < 1e-15);
        assert!((k.spectrum()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_eigenvalue_above_one() {
        let err = KernelMatrix::from_rows(2, &[1.2, 0.0, 0.0, 0.3]).unwrap_err();
        assert!(matches!(err, DppError::SpectrumOutOfRange { .. }));
    }

    #[test]
    fn rejects_asymmetric() {
        let err = KernelMatrix::from_rows(2, &[0.5, 0.1, 0.0, 0.5]).unwrap_err();
        assert!(matches!(err, DppError::NotHermitian { .. }));
    }

    #[test]
    fn rejects_non_square_and_nan() {
        let raw = CMatrix::zeros(2, 3);
        assert!(matches!(
            validate_kernel(&raw, KernelTolerances::default()),
            Err(DppError::DimensionMismatch { .. })
        ));
        let mut raw = CMatrix::zeros(2, 2);
        raw[(0, 0)] = c(f64::NAN);
        assert_eq!(validate_kernel(&raw, KernelTolerances::default()), Err(DppError::NonFinite));
    }

    #[test]
    fn clips_small_excursions() {
        let k = KernelMatrix::from_rows(2, &[1.0 + 5e-9, 0.0, 0.0, -3e-9]).unwrap();
        assert_eq!(k.get(0, 0), c(1.0));
        assert_eq!(k.get(1, 1), c(0.0));
        assert!((k.clip_excess() - 5e-9).abs() < 1e-15);
    }

    #[test]
    fn complex_hermitian_kernel() {
        let i = Complex64::new(0.0, 0.5);
        let raw = CMatrix::from_row_slice(2, 2, &[c(0.5), i, -i, c(0.5)]);
        let k = KernelMatrix::from_complex(&raw).unwrap();
        assert!(!k.is_real());
        assert!(k.is_projection());
    }

    #[test]
    fn compress_examples() {
        let k = KernelMatrix::from_rows(2, &[0.3, 0.0, 0.0, 0.6]).unwrap();
        let a = SiteSubset::from_indices(2, &[0]).unwrap();
        let m = compress(&k, &a, &a).unwrap();
        assert_eq!(m[(0, 0)], c(0.3));
        assert_eq!(m[(1, 1)], c(0.0));
        let full = SiteSubset::full(2);
        assert_eq!(&compress(&k, &full, &full).unwrap(), k.entries());

        let h = KernelMatrix::from_rows(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let b = SiteSubset::from_indices(2, &[1]).unwrap();
        let m = compress(&h, &a, &b).unwrap();
        assert_eq!(m[(0, 1)], c(0.5));
        assert_eq!(m[(0, 0)], c(0.0));
        assert_eq!(m[(1, 0)], c(0.0));
        assert_eq!(m[(1, 1)], c(0.0));

        let wrong = SiteSubset::full(3);
        assert!(matches!(compress(&k, &wrong, &a), Err(DppError::DimensionMismatch { .. })));
    }

    #[test]
    fn kernel_column_examples() {
        let id = KernelMatrix::from_real(&DMatrix::identity(2, 2)).unwrap();
        let col = kernel_column(&id, 0).unwrap();
        assert_eq!(col[0], c(1.0));
        assert_eq!(col[1], c(0.0));
        let h = KernelMatrix::from_rows(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let col = kernel_column(&h, 1).unwrap();
        assert_eq!(col[0], c(0.5));
        assert_eq!(col[1], c(0.5));
        let z = KernelMatrix::from_real(&DMatrix::zeros(3, 3)).unwrap();
        assert!(kernel_column(&z, 2).unwrap().iter().all(|x| x.norm() == 0.0));
        assert!(matches!(kernel_column(&z, 3), Err(DppError::IndexOutOfRange { .. })));
    }

    #[test]
    fn dilation_of_half() {
        let k = KernelMatrix::from_rows(1, &[0.5]).unwrap();
        let d = dilate_to_projection(&k).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.get(i, j) - c(0.5)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dilation_of_projection_is_block_diagonal() {
        let k = KernelMatrix::from_rows(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let d = dilate_to_projection(&k).unwrap();
        let expected = [
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, -0.5],
            [0.0, 0.0, -0.5, 0.5],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((d.get(i, j) - c(expected[i][j])).norm() < 1e-12, "{i} {j}");
            }
        }
    }

    #[test]
    fn discretize_trivial_cases() {
        let grid = GroundSet::embedded(vec![vec![0.0]], vec![0.5]).unwrap();
        let k = discretize_kernel(|_, _| c(1.0), &grid, KernelTolerances::default()).unwrap();
        assert_eq!(k.n(), 1);
        assert!((k.get(0, 0) - c(0.5)).norm() < 1e-15);

        let grid = GroundSet::uniform_interval(5, 0.0, 1.0).unwrap();
        let k = discretize_kernel(|_, _| c(0.0), &grid, KernelTolerances::default()).unwrap();
        assert!(k.entries().iter().all(|z| z.norm() == 0.0));

        let bare = GroundSet::indexed(3);
        assert!(discretize_kernel(|_, _| c(0.0), &bare, KernelTolerances::default()).is_err());
    }

    #[test]
    fn range_projector_examples() {
        let k = KernelMatrix::from_rows(2, &[0.3, 0.0, 0.0, 0.0]).unwrap();
        let p = range_projector(&k, 1e-9).unwrap();
        assert!((p.get(0, 0) - c(1.0)).norm() < 1e-15);
        assert!(p.get(1, 1).norm() < 1e-15);

        let h = KernelMatrix::from_rows(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let p = range_projector(&h, 1e-9).unwrap();
        assert!(linalg::max_abs(&(p.entries() - h.entries())) < 1e-14);
    }

    #[test]
    fn ground_set_invariants() {
        assert!(GroundSet::new(vec!["a".into(), "a".into()], None, None).is_err());
        assert!(GroundSet::new(vec!["a".into()], None, Some(vec![0.0])).is_err());
        assert!(GroundSet::new(vec!["a".into()], Some(vec![]), None).is_err());
        assert!(GroundSet::new(vec!["a".into()], Some(vec![vec![1.0]]), Some(vec![2.0])).is_ok());
    }

    #[test]
    fn configuration_invariants() {
        assert!(Configuration::new(vec![1, 0], 3).is_err());
        assert!(Configuration::new(vec![0, 3], 3).is_err());
        assert_eq!(Configuration::from_unsorted(vec![2, 0], 3).unwrap().indices(), &[0, 2]);
        assert_eq!(Configuration::from_unsorted(vec![2, 2], 3), Err(DppError::DuplicatePoint(2)));
        let x = Configuration::new(vec![0, 2, 3], 4).unwrap();
        let b = SiteSubset::from_indices(4, &[2, 3]).unwrap();
        assert_eq!(x.restrict(&b).indices(), &[2, 3]);
        assert_eq!(Configuration::from_bits(x.bits()), x);
    }
}
