//! Standard kernels: closed-form small cases, random spectra, and
//! discretized continuous kernels.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{discretize_kernel, GroundSet, KernelMatrix, KernelTolerances, SiteSubset};
use crate::error::{DppError, Result};
use crate::linalg::{self, CMatrix, Scalar};

pub fn identity(n: usize) -> KernelMatrix {
    KernelMatrix::from_real(&DMatrix::identity(n, n)).expect("identity is a projection")
}

pub fn zero(n: usize) -> KernelMatrix {
    KernelMatrix::from_real(&DMatrix::zeros(n, n)).expect("zero is a contraction")
}

pub fn diagonal(values: &[f64]) -> Result<KernelMatrix> {
    KernelMatrix::from_real(&DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(values)))
}

/// `(1/n) * ones(n, n)`: the rank-one projection onto constants.
pub fn uniform_rank1(n: usize) -> Result<KernelMatrix> {
    if n == 0 {
        return Err(DppError::InvalidParameter("uniform_rank1 needs n >= 1".into()));
    }
    KernelMatrix::from_real(&DMatrix::from_element(n, n, 1.0 / n as f64))
}

/// Haar-distributed orthogonal (or unitary when `complex`) matrix: QR of a
/// Gaussian matrix with the phases of `R`'s diagonal absorbed into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, complex: bool, rng: &mut R) -> CMatrix {
    if complex {
        let g = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        haar_fix(g)
    } else {
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        linalg::lift(&haar_fix(g))
    }
}

fn haar_fix<T: Scalar>(g: DMatrix<T>) -> DMatrix<T> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let m = d.modulus();
        if m > 0.0 {
            let phase = d.unscale(m);
            q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
        }
    }
    q
}

/// `U diag(spectrum) U*` for a Haar-random `U`.
pub fn with_spectrum<R: Rng + ?Sized>(
    spectrum: &[f64],
    complex: bool,
    rng: &mut R,
) -> Result<KernelMatrix> {
    let u = random_unitary(spectrum.len(), complex, rng);
    let m = linalg::hermitian_part(&linalg::from_spectrum(spectrum, &u));
    if complex {
        KernelMatrix::from_complex(&m)
    } else {
        KernelMatrix::from_complex(&m.map(|z| Complex64::new(z.re, 0.0)))
    }
}

/// Random real contraction with eigenvalues uniform on `[0, 1]`.
pub fn random_contraction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<KernelMatrix> {
    let spectrum: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    with_spectrum(&spectrum, false, rng)
}

/// Random real rank-`rank` orthogonal projection.
pub fn random_projection<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> Result<KernelMatrix> {
    if rank > n {
        return Err(DppError::InvalidParameter(format!("rank {rank} exceeds n = {n}")));
    }
    let spectrum: Vec<f64> = (0..n).map(|i| if i < rank { 1.0 } else { 0.0 }).collect();
    with_spectrum(&spectrum, false, rng)
}

/// Random orthogonal projection of rank `rank` whose range lies in the
/// coordinates outside `window`, so that `chi_B Q = 0`.
pub fn random_projection_avoiding<R: Rng + ?Sized>(
    window: &SiteSubset,
    rank: usize,
    rng: &mut R,
) -> Result<CMatrix> {
    let n = window.n();
    let outside = window.complement().indices();
    if rank > outside.len() {
        return Err(DppError::InvalidParameter(format!(
            "rank {rank} exceeds the {} sites outside the window",
            outside.len()
        )));
    }
    let g = DMatrix::<f64>::from_fn(outside.len(), rank, |_, _| rng.sample(StandardNormal));
    let basis = linalg::column_space(&g, 1e-10);
    let small = &basis * basis.transpose();
    Ok(linalg::lift(&linalg::embed(&small, &outside, &outside, n)))
}

/// `sin(pi (x - y)) / (pi (x - y))`, equal to 1 on the diagonal.
pub fn sine_function(x: f64, y: f64) -> f64 {
    let d = std::f64::consts::PI * (x - y);
    if d.abs() < 1e-12 {
        1.0
    } else {
        d.sin() / d
    }
}

/// Sine kernel on an `n`-cell midpoint grid of `[0, length]`.
pub fn sine_kernel(n: usize, length: f64) -> Result<(KernelMatrix, GroundSet)> {
    let grid = GroundSet::uniform_interval(n, 0.0, length)?;
    let k = discretize_kernel(
        |a, b| Complex64::new(sine_function(a[0], b[0]), 0.0),
        &grid,
        KernelTolerances::default(),
    )?;
    Ok((k, grid))
}

/// `1 / (pi (1 - z conj(w))^2)`, the Bergman kernel of the unit disk.
pub fn bergman_function(z: Complex64, w: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let d = one - z * w.conj();
    one / (std::f64::consts::PI * d * d)
}

/// Bergman kernel restricted to the disk of radius `radius < 1` on a polar
/// midpoint grid. The restriction of the projection to a subdisk is a
/// contraction with eigenvalues `radius^(2k + 2)`.
pub fn bergman_kernel(rings: usize, sectors: usize, radius: f64) -> Result<(KernelMatrix, GroundSet)> {
    if !(radius < 1.0) {
        return Err(DppError::InvalidParameter(format!("radius {radius} must be below 1")));
    }
    let grid = GroundSet::polar_disk(rings, sectors, radius)?;
    let k = discretize_kernel(
        |a, b| bergman_function(Complex64::new(a[0], a[1]), Complex64::new(b[0], b[1])),
        &grid,
        KernelTolerances::default(),
    )?;
    Ok((k, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for complex in [false, true] {
            let u = random_unitary(5, complex, &mut rng);
            let err = linalg::max_abs(&(&u * u.adjoint() - CMatrix::identity(5, 5)));
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn random_projection_has_requested_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_projection(8, 3, &mut rng).unwrap();
        assert!(p.is_projection());
        assert!((p.trace() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_avoiding_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = SiteSubset::from_indices(6, &[0, 2]).unwrap();
        let q = random_projection_avoiding(&b, 2, &mut rng).unwrap();
        assert!(linalg::max_abs(&(&q * &q - &q)) < 1e-12);
        for j in 0..6 {
            assert_eq!(q[(0, j)], Complex64::new(0.0, 0.0));
            assert_eq!(q[(2, j)], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn sine_kernel_is_a_contraction() {
        let (k, grid) = sine_kernel(64, 8.0).unwrap();
        assert_eq!(grid.len(), 64);
        assert!(k.is_real());
        assert!(!k.is_projection());
        assert!((k.trace() - 8.0).abs() < 1e-12);
        assert!(k.clip_excess() < 1e-8);
    }

    #[test]
    fn bergman_kernel_spectrum() {
        let (k, _) = bergman_kernel(10, 24, 0.6).unwrap();
        assert!(!k.is_real());
        let top = *k.spectrum().last().unwrap();
        assert!((top - 0.36).abs() < 1e-2, "top eigenvalue {top}");
    }
}
