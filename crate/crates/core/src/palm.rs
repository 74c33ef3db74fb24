//! Palm kernels, conditional kernels `K^{[X, B]}`, induced kernels, the
//! exhaustion limit and the subspace description for projections.
//!
//! For points `p_1, ..., p_l` the Palm kernel is the Schur complement
//! `K - K(., P) K(P, P)^{-1} K(P, .)`. Given a configuration `X` and a
//! window `B`, write `M` for the Palm kernel at `X ∩ B` and `C = E \ B`.
//! Then
//!
//! ```text
//! K^{[X, B]} = chi_C M (1 - chi_B M)^{-1} chi_C
//!            = M_CC + M_CB (1 - M_BB)^{-1} M_BC   on C, zero elsewhere.
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::{with_entries, Configuration, KernelMatrix, SiteSubset};
use crate::linalg::{self, CMatrix, Scalar};

/// Thresholds that turn the exact "= 0" branches into decisions. `diag`
/// and `det` are relative to the largest diagonal entry of the kernel; `sv`
/// is absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningTolerances {
    /// Smallest admissible `K(p, p)` for a single Palm point.
    pub diag: f64,
    /// Smallest admissible `L D L*` pivot of `K(P, P)`.
    pub det: f64,
    /// Smallest admissible eigenvalue of `1 - M_BB`.
    pub sv: f64,
}

impl Default for ConditioningTolerances {
    fn default() -> Self {
        Self { diag: 1e-12, det: 1e-12, sv: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PalmMethod {
    /// One point at a time, `(K^{p_1})^{p_2} ...`.
    Recursive,
    /// Schur complement through an `L D L*` factorization of `K(P, P)`.
    DetRatio,
}

#[derive(Debug, Clone)]
pub struct PalmKernel {
    pub base: KernelMatrix,
    pub points: Vec<usize>,
    pub matrix: KernelMatrix,
    /// A denominator vanished; `matrix` is then zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConditionalStatus {
    /// `1 - M_BB` was invertible; `certificate` is its smallest eigenvalue.
    Regular { certificate: f64 },
    /// The Palm step degenerated or `1 - M_BB` was numerically singular.
    /// The certificate is the failed pivot or eigenvalue.
    Degenerate { certificate: f64 },
}

impl ConditionalStatus {
    pub fn is_regular(&self) -> bool {
        matches!(self, Self::Regular { .. })
    }

    pub fn certificate(&self) -> f64 {
        match *self {
            Self::Regular { certificate } | Self::Degenerate { certificate } => certificate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionalKernel {
    pub base: KernelMatrix,
    pub window: SiteSubset,
    /// The part of the configuration inside the window, `X ∩ B`.
    pub trace_config: Configuration,
    /// Supported on the complement of the window.
    pub matrix: KernelMatrix,
    pub status: ConditionalStatus,
}

/// Per-stage distances of an exhaustion to its final stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// `(window size, trace-norm distance, operator-norm distance)`.
    pub stages: Vec<(usize, f64, f64)>,
}

fn check_points(n: usize, points: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &p in points {
        if p >= n {
            return Err(DppError::IndexOutOfRange { index: p, n });
        }
        if seen[p] {
            return Err(DppError::DuplicatePoint(p));
        }
        seen[p] = true;
    }
    Ok(())
}

fn check_window(k: &KernelMatrix, b: &SiteSubset) -> Result<()> {
    if b.n() != k.n() {
        return Err(DppError::DimensionMismatch { expected: k.n(), actual: b.n() });
    }
    Ok(())
}

/// Schur complement `K - K(., P) K(P, P)^{-1} K(P, .)` with rows and
/// columns at `P` set to zero, or the failed pivot.
pub(crate) fn schur_palm<T: Scalar>(m: &DMatrix<T>, points: &[usize], min_pivot: f64) -> Result<DMatrix<T>, f64> {
    if points.is_empty() {
        return Ok(m.clone());
    }
    let n = m.nrows();
    let all: Vec<usize> = (0..n).collect();
    let (l, d) = linalg::ldl(&linalg::select(m, points, points), min_pivot)?;
    let mut out = m - linalg::ldl_inverse_form(&l, &d, &linalg::select(m, points, &all));
    for &p in points {
        out.row_mut(p).fill(T::zero());
        out.column_mut(p).fill(T::zero());
    }
    Ok(linalg::hermitian_part(&out))
}

fn palm_one_raw<T: Scalar>(m: &DMatrix<T>, p: usize, min_diag: f64) -> Option<DMatrix<T>> {
    let d = m[(p, p)].real();
    if !(d > min_diag) {
        return None;
    }
    let col = m.column(p).into_owned();
    let inv = T::from_real(1.0 / d);
    let mut out = m - &col * col.adjoint() * inv;
    out.row_mut(p).fill(T::zero());
    out.column_mut(p).fill(T::zero());
    Some(linalg::hermitian_part(&out))
}

fn finish_palm(k: &KernelMatrix, points: &[usize], matrix: Option<CMatrix>) -> Result<PalmKernel> {
    let (matrix, degenerate) = match matrix {
        Some(m) => (k.derive(&m)?, false),
        None => (k.zero_like(), true),
    };
    Ok(PalmKernel { base: k.clone(), points: points.to_vec(), matrix, degenerate })
}

/// Palm kernel at a single point; zero and degenerate when `K(p, p)` is
/// numerically zero.
pub fn palm_one(k: &KernelMatrix, p: usize, tols: &ConditioningTolerances) -> Result<PalmKernel> {
    check_points(k.n(), &[p])?;
    let min_diag = tols.diag * k.scale();
    let m = with_entries!(k, |e| palm_one_raw(e, p, min_diag).map(|r| linalg::lift(&r)));
    finish_palm(k, &[p], m)
}

/// Palm kernel at several distinct points.
pub fn palm_many(
    k: &KernelMatrix,
    points: &[usize],
    method: PalmMethod,
    tols: &ConditioningTolerances,
) -> Result<PalmKernel> {
    check_points(k.n(), points)?;
    let m = match method {
        PalmMethod::Recursive => {
            let min_diag = tols.diag * k.scale();
            with_entries!(k, |e| {
                let mut cur = Some(e.clone());
                for &p in points {
                    cur = cur.and_then(|c| palm_one_raw(&c, p, min_diag));
                }
                cur.map(|r| linalg::lift(&r))
            })
        }
        PalmMethod::DetRatio => {
            let min_pivot = tols.det * k.scale();
            with_entries!(k, |e| schur_palm(e, points, min_pivot).ok().map(|r| linalg::lift(&r)))
        }
    };
    finish_palm(k, points, m)
}

/// Outcome of the block computation on `C = E \ B`.
pub(crate) enum Block<T: Scalar> {
    /// `K^{[X, B]}` restricted to `rows x rows`, and the smallest
    /// eigenvalue of `1 - M_BB`.
    Regular(DMatrix<T>, f64),
    Degenerate(f64),
}

/// `M_RR + M_RB (1 - M_BB)^{-1} M_BR` for rows `R` inside `E \ B`, with `M`
/// the Palm kernel at `palm_points`. With `exact_certificate` the smallest
/// eigenvalue of `1 - M_BB` is computed; otherwise the decision rests on the
/// `L D L*` pivots alone.
pub(crate) fn conditional_block<T: Scalar>(
    m: &DMatrix<T>,
    palm_points: &[usize],
    window: &[usize],
    rows: &[usize],
    scale: f64,
    tols: &ConditioningTolerances,
    exact_certificate: bool,
) -> Block<T> {
    let palm = match schur_palm(m, palm_points, tols.det * scale) {
        Ok(p) => p,
        Err(pivot) => return Block::Degenerate(pivot),
    };
    let free: Vec<usize> = window.iter().copied().filter(|i| !palm_points.contains(i)).collect();
    let m_rr = linalg::select(&palm, rows, rows);
    if free.is_empty() {
        return Block::Regular(m_rr, 1.0);
    }
    let gap = DMatrix::<T>::identity(free.len(), free.len()) - linalg::select(&palm, &free, &free);
    let threshold = tols.sv;
    let certificate = if exact_certificate {
        let lo = linalg::hermitian_eigenvalues(&gap)[0];
        if !(lo > threshold) {
            return Block::Degenerate(lo);
        }
        lo
    } else {
        f64::NAN
    };
    let (l, d) = match linalg::ldl(&gap, threshold) {
        Ok(f) => f,
        Err(pivot) => return Block::Degenerate(if exact_certificate { certificate } else { pivot }),
    };
    let out = m_rr + linalg::ldl_inverse_form(&l, &d, &linalg::select(&palm, &free, rows));
    Block::Regular(linalg::hermitian_part(&out), certificate)
}

/// `K^{[X, B]}`; only `X ∩ B` is read.
pub fn conditional_kernel(
    k: &KernelMatrix,
    x: &Configuration,
    b: &SiteSubset,
    tols: &ConditioningTolerances,
) -> Result<ConditionalKernel> {
    check_window(k, b)?;
    check_points(k.n(), x.indices())?;
    let xb = x.restrict(b);
    let window = b.indices();
    let outside = b.complement().indices();
    let n = k.n();
    let scale = k.scale();
    let (matrix, status) = with_entries!(k, |e| {
        match conditional_block(e, xb.indices(), &window, &outside, scale, tols, true) {
            Block::Regular(sub, cert) => (
                Some(linalg::lift(&linalg::embed(&sub, &outside, &outside, n))),
                ConditionalStatus::Regular { certificate: cert },
            ),
            Block::Degenerate(cert) => (None, ConditionalStatus::Degenerate { certificate: cert }),
        }
    });
    let matrix = match matrix {
        Some(m) => k.derive(&m)?,
        None => k.zero_like(),
    };
    Ok(ConditionalKernel { base: k.clone(), window: b.clone(), trace_config: xb, matrix, status })
}

/// `K^{[X, B]}` by the Neumann series `chi_C sum_m M (chi_B M)^m chi_C`.
///
/// Requires `‖chi_B M‖ < 1 - tols.sv`. Summation stops once the geometric
/// bound on the remaining terms falls below `series_tol`. A regular result
/// carries `1 - ‖chi_B M‖` as its certificate.
pub fn conditional_kernel_neumann(
    k: &KernelMatrix,
    x: &Configuration,
    b: &SiteSubset,
    series_tol: f64,
    tols: &ConditioningTolerances,
) -> Result<ConditionalKernel> {
    const MAX_TERMS: usize = 100_000;
    check_window(k, b)?;
    check_points(k.n(), x.indices())?;
    let xb = x.restrict(b);
    let window = b.indices();
    let outside = b.complement().indices();
    let all: Vec<usize> = (0..k.n()).collect();
    let n = k.n();
    let scale = k.scale();
    let result: Result<(Option<CMatrix>, f64)> = with_entries!(k, |e| (|| {
        let palm = match schur_palm(e, xb.indices(), tols.det * scale) {
            Ok(p) => p,
            Err(pivot) => return Ok((None, pivot)),
        };
        let q = linalg::operator_norm(&linalg::select(&palm, &window, &all));
        if q >= 1.0 - tols.sv {
            return Err(DppError::NotContractive { norm: q });
        }
        let m_bb = linalg::select(&palm, &window, &window);
        let m_cb = linalg::select(&palm, &outside, &window);
        let r = linalg::operator_norm(&m_bb);
        let left = linalg::operator_norm(&m_cb);
        let mut sum = linalg::select(&palm, &outside, &outside);
        let mut v = linalg::select(&palm, &window, &outside);
        let mut converged = false;
        for _ in 0..MAX_TERMS {
            if left * linalg::operator_norm(&v) / (1.0 - r) < series_tol {
                converged = true;
                break;
            }
            sum += &m_cb * &v;
            v = &m_bb * v;
        }
        if !converged {
            return Err(DppError::NumericalBreakdown(format!(
                "Neumann series did not reach {series_tol:.1e} within {MAX_TERMS} terms"
            )));
        }
        let sum = linalg::embed(&linalg::hermitian_part(&sum), &outside, &outside, n);
        Ok((Some(linalg::lift(&sum)), 1.0 - q))
    })());
    let (matrix, status) = match result? {
        (Some(m), margin) => (k.derive(&m)?, ConditionalStatus::Regular { certificate: margin }),
        (None, pivot) => (k.zero_like(), ConditionalStatus::Degenerate { certificate: pivot }),
    };
    Ok(ConditionalKernel { base: k.clone(), window: b.clone(), trace_config: xb, matrix, status })
}

/// The induced kernel for the event `X ∩ B = ∅`.
pub fn induced_kernel(
    k: &KernelMatrix,
    b: &SiteSubset,
    tols: &ConditioningTolerances,
) -> Result<ConditionalKernel> {
    check_window(k, b)?;
    let gap = crate::sampling::gap_probability(k, b)?;
    if !(gap > tols.det) {
        return Err(DppError::ZeroGapProbability { gap });
    }
    conditional_kernel(k, &Configuration::empty(), b, tols)
}

/// `chi_{E \ W} K^{[X, W]} chi_{E \ W}` through an increasing exhaustion of
/// `W`, with the distance of each stage to the last.
pub fn conditional_limit(
    k: &KernelMatrix,
    x: &Configuration,
    w: &SiteSubset,
    exhaustion: &[SiteSubset],
    tols: &ConditioningTolerances,
) -> Result<(ConditionalKernel, ConvergenceTrace)> {
    check_window(k, w)?;
    let nested = !exhaustion.is_empty()
        && exhaustion.iter().all(|d| d.n() == k.n() && d.is_subset(w))
        && exhaustion.windows(2).all(|p| p[0].is_subset(&p[1]))
        && exhaustion.last() == Some(w);
    if !nested {
        return Err(DppError::ExhaustionNotNested);
    }
    let outside = w.complement();
    let stages: Vec<CMatrix> = exhaustion
        .iter()
        .map(|d| {
            conditional_kernel(k, x, d, tols)
                .map(|c| crate::kernel::compress_matrix(c.matrix.entries(), &outside, &outside))
        })
        .collect::<Result<_>>()?;
    let last = stages.last().expect("nonempty exhaustion");
    let trace = ConvergenceTrace {
        stages: exhaustion
            .iter()
            .zip(&stages)
            .map(|(d, s)| {
                let diff = s - last;
                (d.len(), linalg::trace_norm_hermitian(&diff), linalg::operator_norm(&diff))
            })
            .collect(),
    };
    let result = conditional_kernel(k, x, w, tols)?;
    Ok((result, trace))
}

/// For a projection kernel with range `H`, the orthogonal projection onto
/// `chi_{E \ B} H(X ∩ B)`, where `H(P)` is the subspace of `H` vanishing on
/// `P`.
pub fn projection_conditional_subspace(
    k: &KernelMatrix,
    x: &Configuration,
    b: &SiteSubset,
) -> Result<KernelMatrix> {
    const RANK_TOL: f64 = 1e-10;
    if !k.is_projection() {
        return Err(DppError::NotAProjection);
    }
    check_window(k, b)?;
    let xb = x.restrict(b);
    let n = k.n();
    let basis = crate::kernel::range_basis(k);
    let r = basis.ncols();
    let cols: Vec<usize> = (0..r).collect();
    let vanishing = if xb.is_empty() {
        basis
    } else {
        let eval = linalg::select(&basis, xb.indices(), &cols);
        &basis * linalg::null_space(&eval, RANK_TOL)
    };
    let mut restricted = vanishing;
    for i in b.indices() {
        restricted.row_mut(i).fill(num_complex::Complex64::new(0.0, 0.0));
    }
    let span = linalg::column_space(&restricted, RANK_TOL);
    let proj = if span.ncols() == 0 { CMatrix::zeros(n, n) } else { &span * span.adjoint() };
    k.derive(&linalg::hermitian_part(&proj))
}
