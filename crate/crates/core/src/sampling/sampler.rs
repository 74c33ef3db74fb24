//! Exact spectral sampler.
//!
//! Each eigenvector of `K` is kept independently with probability equal to
//! its eigenvalue. The projection process on the kept vectors is then drawn
//! one point at a time: a site is chosen with probability proportional to
//! the squared row norm of the current basis, the basis is reduced to the
//! functions vanishing at that site, and the remaining columns are
//! re-orthonormalized.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::{Configuration, KernelMatrix};
use crate::linalg::{self, CMatrix, Scalar};

/// Reproducible per-trial generator: stream `trial` of the ChaCha8 generator
/// seeded by `master`. Any trial can be regenerated on its own, so results
/// do not depend on how trials are spread over threads.
pub fn trial_rng(master: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone)]
enum Eigen {
    Real(Vec<f64>, DMatrix<f64>),
    Complex(Vec<f64>, CMatrix),
}

/// Eigendecomposition of a kernel, reusable across samples.
#[derive(Debug, Clone)]
pub struct SpectralSampler {
    n: usize,
    eigen: Eigen,
}

/// Squared row norms this far below zero signal a broken basis.
const INTENSITY_FLOOR: f64 = -1e-9;

impl SpectralSampler {
    pub fn new(k: &KernelMatrix) -> Self {
        let eigen = match k.real_entries() {
            Some(m) => {
                let (v, u) = linalg::hermitian_eigen(m);
                Eigen::Real(v, u)
            }
            None => {
                let (v, u) = linalg::hermitian_eigen(k.entries());
                Eigen::Complex(v, u)
            }
        };
        Self { n: k.n(), eigen }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Configuration> {
        let indices = match &self.eigen {
            Eigen::Real(v, u) => sample_spectral(v, u, rng)?,
            Eigen::Complex(v, u) => sample_spectral(v, u, rng)?,
        };
        Configuration::from_unsorted(indices, self.n)
    }
}

fn sample_spectral<T: Scalar, R: Rng + ?Sized>(
    values: &[f64],
    vectors: &DMatrix<T>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let keep: Vec<usize> = (0..values.len())
        .filter(|&i| {
            let u: f64 = rng.random();
            u < values[i]
        })
        .collect();
    let rows: Vec<usize> = (0..vectors.nrows()).collect();
    sample_projection(linalg::select(vectors, &rows, &keep), rng)
}

/// Draws from the projection process onto the span of the orthonormal
/// columns of `basis`.
pub(crate) fn sample_projection<T: Scalar, R: Rng + ?Sized>(
    mut basis: DMatrix<T>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = basis.nrows();
    let mut points = Vec::with_capacity(basis.ncols());
    while basis.ncols() > 0 {
        let weights: Vec<f64> = (0..n).map(|i| basis.row(i).norm_squared()).collect();
        if let Some(&w) = weights.iter().find(|&&w| w < INTENSITY_FLOOR || !w.is_finite()) {
            return Err(DppError::NumericalBreakdown(format!("conditional intensity {w:.3e}")));
        }
        let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        if !(total > 0.0) {
            return Err(DppError::NumericalBreakdown("conditional intensity vanished".into()));
        }
        let site = pick(&weights, total, rng);
        points.push(site);

        let pivot = (0..basis.ncols())
            .max_by(|&a, &b| basis[(site, a)].modulus().total_cmp(&basis[(site, b)].modulus()))
            .expect("nonempty basis");
        let pv = basis.column(pivot).into_owned();
        let pivot_value = basis[(site, pivot)];
        for c in 0..basis.ncols() {
            if c != pivot {
                let factor = basis[(site, c)] / pivot_value;
                let mut col = basis.column_mut(c);
                col -= &pv * factor;
            }
        }
        basis = basis.remove_column(pivot);
        orthonormalize(&mut basis);
    }
    Ok(points)
}

fn pick<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Modified Gram-Schmidt applied twice for stability.
fn orthonormalize<T: Scalar>(basis: &mut DMatrix<T>) {
    for _ in 0..2 {
        for c in 0..basis.ncols() {
            for prev in 0..c {
                let q = basis.column(prev).into_owned();
                let proj = q.dotc(&basis.column(c));
                let mut col = basis.column_mut(c);
                col -= q * proj;
            }
            let norm = basis.column(c).norm();
            if norm > 0.0 {
                basis.column_mut(c).unscale_mut(norm);
            }
        }
    }
}

/// One exact sample from `P_K` using stream 0 of `seed`.
pub fn sample_dpp(k: &KernelMatrix, seed: u64) -> Result<Configuration> {
    SpectralSampler::new(k).sample(&mut trial_rng(seed, 0))
}

/// A reproducible batch of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub kernel_id: String,
    pub configs: Vec<Configuration>,
}

impl SampleBatch {
    /// One JSON array of sorted site indices per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for c in &self.configs {
            out.push_str(&serde_json::to_string(c.indices()).expect("index arrays serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str, n: usize, seed: u64, kernel_id: &str) -> Result<Self> {
        let configs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: Vec<usize> = serde_json::from_str(l).map_err(|e| DppError::Parse(e.to_string()))?;
                Configuration::new(v, n)
            })
            .collect::<Result<_>>()?;
        Ok(Self { seed, kernel_id: kernel_id.to_string(), configs })
    }
}

/// Samples trial `t` from stream `t` of `seed`, in parallel, returned in
/// trial order.
pub fn sample_batch(k: &KernelMatrix, seed: u64, trials: usize, kernel_id: &str) -> Result<SampleBatch> {
    let sampler = SpectralSampler::new(k);
    let configs = (0..trials as u64)
        .into_par_iter()
        .map(|t| sampler.sample(&mut trial_rng(seed, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleBatch { seed, kernel_id: kernel_id.to_string(), configs })
}
