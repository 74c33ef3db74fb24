//! Dense linear-algebra helpers shared by every module.
//!
//! Kernels are stored as complex matrices. When all imaginary parts vanish
//! the hot routines run on an `f64` copy instead; everything here is written
//! once over [`Scalar`] so both paths execute the same arithmetic.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

/// Field of matrix entries: `f64` for real symmetric kernels, `Complex64`
/// for Hermitian ones.
pub trait Scalar: ComplexField<RealField = f64> + Copy {
    fn to_c64(self) -> Complex64;
    /// Drops the imaginary part when `Self` is real.
    fn from_c64(z: Complex64) -> Self;
}

impl Scalar for f64 {
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_c64(z: Complex64) -> Self {
        z.re
    }
}

impl Scalar for Complex64 {
    fn to_c64(self) -> Complex64 {
        self
    }
    fn from_c64(z: Complex64) -> Self {
        z
    }
}

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn lift<T: Scalar>(m: &DMatrix<T>) -> CMatrix {
    m.map(|x| x.to_c64())
}

pub fn lower<T: Scalar>(m: &CMatrix) -> DMatrix<T> {
    m.map(T::from_c64)
}

/// Largest entry modulus.
pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.modulus()))
}

/// `(M + M*) / 2`.
pub fn hermitian_part<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::from_real(0.5);
    (m + m.adjoint()) * half
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending with
/// eigenvectors as the matching columns.
pub fn hermitian_eigen<T: Scalar>(m: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `V diag(values) V*`.
pub fn from_spectrum<T: Scalar>(values: &[f64], vectors: &DMatrix<T>) -> DMatrix<T> {
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        let s = T::from_real(v);
        scaled.column_mut(c).iter_mut().for_each(|x| *x *= s);
    }
    &scaled * vectors.adjoint()
}

/// Trace norm of a Hermitian matrix (sum of absolute eigenvalues).
pub fn trace_norm_hermitian<T: Scalar>(m: &DMatrix<T>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|v| v.abs()).sum()
}

/// Operator (spectral) norm.
pub fn operator_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Submatrix on the given row and column index lists.
pub fn select<T: Scalar>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Zero-padded `n x n` matrix holding `sub` at the given rows and columns.
pub fn embed<T: Scalar>(sub: &DMatrix<T>, rows: &[usize], cols: &[usize], n: usize) -> DMatrix<T> {
    let mut out = DMatrix::zeros(n, n);
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            out[(i, j)] = sub[(r, c)];
        }
    }
    out
}

/// Determinant of a Hermitian matrix (real by construction).
pub fn hermitian_det<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant().to_c64().re
}

/// Orthonormal basis of the null space of `m`: right singular vectors with
/// singular value at most `tol`.
pub fn null_space<T: Scalar>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // Pad to at least as many rows as columns so the thin SVD returns the
    // full right singular basis.
    let padded = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    DMatrix::from_fn(cols, keep.len(), |r, c| v_t[(keep[c], r)].conjugate())
}

/// Orthonormal basis for the column span of `m`, dropping directions whose
/// singular value is at most `tol`.
pub fn column_space<T: Scalar>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Matrix of `2 x 2` minors of `m` on the index set `idx`: the matrix of the
/// second exterior power restricted to `span{e_i : i in idx}`, indexed by
/// pairs `i < j` in lexicographic order.
pub fn exterior_square<T: Scalar>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    let pairs: Vec<(usize, usize)> = (0..idx.len())
        .flat_map(|a| ((a + 1)..idx.len()).map(move |b| (idx[a], idx[b])))
        .collect();
    DMatrix::from_fn(pairs.len(), pairs.len(), |r, c| {
        let (i, j) = pairs[r];
        let (k, l) = pairs[c];
        m[(i, k)] * m[(j, l)] - m[(i, l)] * m[(j, k)]
    })
}

/// Square-root-free factorization `A = L D L*` of a Hermitian matrix, with
/// `L` unit lower-triangular. Fails with the offending pivot as soon as one
/// falls to `min_pivot` or below. Avoiding square roots keeps dyadic inputs
/// such as `1/2` exact.
pub fn ldl<T: Scalar>(a: &DMatrix<T>, min_pivot: f64) -> Result<(DMatrix<T>, Vec<f64>), f64> {
    let n = a.nrows();
    let mut l = DMatrix::<T>::identity(n, n);
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = a[(j, j)].real();
        for k in 0..j {
            dj -= l[(j, k)].modulus_squared() * d[k];
        }
        if !(dj > min_pivot) {
            return Err(dj);
        }
        d[j] = dj;
        let inv = T::from_real(1.0 / dj);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conjugate() * T::from_real(d[k]);
            }
            l[(i, j)] = s * inv;
        }
    }
    Ok((l, d))
}

/// `B* A^{-1} B` for `A = L D L*`, as `Y* D^{-1} Y` with `L Y = B`.
pub fn ldl_inverse_form<T: Scalar>(l: &DMatrix<T>, d: &[f64], b: &DMatrix<T>) -> DMatrix<T> {
    let mut y = b.clone();
    let n = l.nrows();
    for c in 0..y.ncols() {
        for i in 0..n {
            let mut s = y[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * y[(k, c)];
            }
            y[(i, c)] = s;
        }
    }
    let mut scaled = y.clone();
    for (i, &di) in d.iter().enumerate() {
        let inv = T::from_real(1.0 / di);
        scaled.row_mut(i).iter_mut().for_each(|z| *z *= inv);
    }
    y.adjoint() * scaled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        assert!((vals[2] - 5.0).abs() < 1e-12);
        let back = from_spectrum(&vals, &vecs);
        assert!(max_abs(&(back - m)) < 1e-12);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(&m * &ns)) < 1e-12);
    }

    #[test]
    fn exterior_square_of_identity() {
        let m = DMatrix::<f64>::identity(3, 3);
        let w = exterior_square(&m, &[0, 1, 2]);
        assert_eq!(w.nrows(), 3);
        assert!(max_abs(&(w - DMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn ldl_solves_and_flags_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let (l, d) = ldl(&a, 0.0).unwrap();
        let dm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone()));
        assert!(max_abs(&(&l * dm * l.transpose() - &a)) < 1e-14);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let form = ldl_inverse_form(&l, &d, &b);
        let direct = b.transpose() * a.clone().try_inverse().unwrap() * &b;
        assert!(max_abs(&(form - direct)) < 1e-14);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(ldl(&s, 1e-12).unwrap_err(), 0.0);
    }

    #[test]
    fn ldl_is_exact_on_halves() {
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let (l, d) = ldl(&a, 0.0).unwrap();
        let b = DMatrix::from_row_slice(1, 1, &[0.5]);
        assert_eq!(ldl_inverse_form(&l, &d, &b)[(0, 0)], 0.5);
    }

    #[test]
    fn trace_norm_of_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        assert!((trace_norm_hermitian(&m) - 3.0).abs() < 1e-14);
    }
}
