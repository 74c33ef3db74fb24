use dppcond::kernel::{factory, validate_kernel, KernelTolerances};
use dppcond::linalg::{self, CMatrix};
use dppcond::palm::{
    conditional_kernel, conditional_kernel_neumann, palm_many, projection_conditional_subspace, ConditioningTolerances,
    PalmMethod,
};
use dppcond::sampling::{correlation, enumerate_distribution, gap_probability, sample_batch, trial_rng};
use dppcond::verification::corpus::{random_corpus, random_kernel, random_points_in, random_window, CorpusClass};
use dppcond::{compress, dilate_to_projection, Configuration, KernelMatrix, SiteSubset};
use num_complex::Complex64;
use proptest::prelude::*;

fn tols() -> ConditioningTolerances {
    ConditioningTolerances::default()
}

fn class_strategy() -> impl Strategy<Value = CorpusClass> {
    prop::sample::select(CorpusClass::ALL.to_vec())
}

fn kernel_strategy(n_max: usize) -> impl Strategy<Value = (KernelMatrix, u64)> {
    (class_strategy(), 2..=n_max, any::<u64>()).prop_map(|(class, n, seed)| {
        let mut rng = trial_rng(seed, 0);
        (random_kernel(class, n, &mut rng).unwrap(), seed)
    })
}

/// `chi_C M (1 - chi_B M)^{-1} chi_C` with `M = K - K_{.P} K_PP^{-1} K_{P.}`,
/// through dense inverses of the full matrices.
fn dense_conditional(k: &KernelMatrix, points: &[usize], b: &SiteSubset) -> Option<CMatrix> {
    let n = k.n();
    let e = k.entries();
    let m = if points.is_empty() {
        e.clone()
    } else {
        let all: Vec<usize> = (0..n).collect();
        let kpp = linalg::select(e, points, points).try_inverse()?;
        let col = linalg::select(e, &all, points);
        let row = linalg::select(e, points, &all);
        e - col * kpp * row
    };
    let chi_b = CMatrix::from_fn(n, n, |i, j| if i == j && b.contains(i) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    let chi_c = CMatrix::identity(n, n) - &chi_b;
    let inv = (CMatrix::identity(n, n) - &chi_b * &m).try_inverse()?;
    Some(&chi_c * m * inv * chi_c)
}

#[test]
fn conditioning_methods_agree() {
    let corpus = random_corpus(31, 200, 2, 8, &CorpusClass::ALL).unwrap();
    let mut compared = 0;
    for e in &corpus {
        let mut rng = trial_rng(32, e.index as u64);
        let n = e.kernel.n();
        let b = random_window(n, &mut rng);
        let x = random_points_in(&b, 3, &mut rng);
        let direct = conditional_kernel(&e.kernel, &x, &b, &tols()).unwrap();
        if !direct.status.is_regular() || direct.status.certificate() < 1e-4 {
            continue;
        }
        let recursive = palm_many(&e.kernel, x.indices(), PalmMethod::Recursive, &tols()).unwrap();
        let ratio = palm_many(&e.kernel, x.indices(), PalmMethod::DetRatio, &tols()).unwrap();
        assert!(linalg::max_abs(&(recursive.matrix.entries() - ratio.matrix.entries())) <= 1e-8);
        let dense = dense_conditional(&e.kernel, x.indices(), &b).expect("invertible");
        assert!(linalg::max_abs(&(direct.matrix.entries() - &dense)) <= 1e-8, "{}", e.label());
        if let Ok(neumann) = conditional_kernel_neumann(&e.kernel, &x, &b, 1e-13, &tols()) {
            assert!(linalg::max_abs(&(neumann.matrix.entries() - &dense)) <= 1e-8, "{}", e.label());
        }
        compared += 1;
    }
    assert!(compared >= 150, "only {compared} certified instances");
}

#[test]
fn trace_powers_match_tuple_sums() {
    let length = 6.0;
    for n in [8, 20] {
        let (k, grid) = factory::sine_kernel(n, length).unwrap();
        let coords = grid.coords().unwrap();
        let weights = grid.weights().unwrap();
        let f = |i: usize, j: usize| factory::sine_function(coords[i][0], coords[j][0]) * (weights[i] * weights[j]).sqrt();
        let b = SiteSubset::range(n, 1, n - 2).unwrap();
        let kb = compress(&k, &b, &b).unwrap();
        let idx = b.indices();
        let mut power = CMatrix::identity(n, n);
        for order in 1..=3 {
            power = &power * &kb;
            let traced = power.trace().re;
            let explicit: f64 = match order {
                1 => idx.iter().map(|&i| f(i, i)).sum(),
                2 => idx.iter().flat_map(|&i| idx.iter().map(move |&j| (i, j))).map(|(i, j)| f(i, j) * f(j, i)).sum(),
                _ => {
                    let mut s = 0.0;
                    for &i in &idx {
                        for &j in &idx {
                            for &l in &idx {
                                s += f(i, j) * f(j, l) * f(l, i);
                            }
                        }
                    }
                    s
                }
            };
            assert!((traced - explicit).abs() <= 1e-9 * explicit.abs().max(1.0), "order {order}: {traced} vs {explicit}");
        }
    }
}

#[test]
fn dilation_is_projection_on_corpus() {
    for e in random_corpus(41, 200, 2, 8, &CorpusClass::ALL).unwrap() {
        let n = e.kernel.n();
        let d = dilate_to_projection(&e.kernel).unwrap();
        let m = d.entries();
        assert!(linalg::max_abs(&(m * m - m)) <= 1e-9, "{}", e.label());
        let first: Vec<usize> = (0..n).collect();
        assert_eq!(linalg::select(m, &first, &first), *e.kernel.entries(), "{}", e.label());
    }
}

#[test]
fn degenerate_iff_zero_probability() {
    let corpus = random_corpus(51, 200, 2, 10, &CorpusClass::ALL).unwrap();
    for e in &corpus {
        let mut rng = trial_rng(52, e.index as u64);
        let n = e.kernel.n();
        let law = enumerate_distribution(&e.kernel).unwrap();
        let b = random_window(n, &mut rng);
        let marginal = law.marginal(&b);
        for s in 0..(1u64 << n) {
            if s & !b.bits() != 0 {
                continue;
            }
            let xi = Configuration::from_bits(s);
            let c = conditional_kernel(&e.kernel, &xi, &b, &tols()).unwrap();
            let p = marginal.probs[s as usize];
            assert_eq!(c.status.is_regular(), p > 1e-12, "{} trace {s:b} p={p}", e.label());
        }
    }
}

#[test]
fn correlations_and_gaps_match_determinants() {
    for e in random_corpus(61, 30, 2, 10, &CorpusClass::ALL).unwrap() {
        let n = e.kernel.n();
        let law = enumerate_distribution(&e.kernel).unwrap();
        assert!((law.total() - 1.0).abs() <= 1e-9);
        let from_law = law.correlations();
        for t in 0..(1u64 << n) {
            let direct = correlation(&e.kernel, &Configuration::from_bits(t)).unwrap();
            assert!((from_law[t as usize] - direct).abs() <= 1e-8, "{} T={t:b}", e.label());
        }
        let mut rng = trial_rng(62, e.index as u64);
        let b = random_window(n, &mut rng);
        let gap = gap_probability(&e.kernel, &b).unwrap();
        assert!((gap - law.marginal(&b).probs[0]).abs() <= 1e-9);
    }
}

#[test]
fn projection_cardinality() {
    let mut rng = trial_rng(71, 0);
    for rank in 1..5 {
        let k = factory::random_projection(7, rank, &mut rng).unwrap();
        let law = enumerate_distribution(&k).unwrap();
        for (s, p) in law.probs.iter().enumerate() {
            if *p > 1e-12 {
                assert_eq!((s as u64).count_ones() as usize, rank);
            }
        }
        let batch = sample_batch(&k, 3, 500, "cardinality").unwrap();
        assert!(batch.configs.iter().all(|c| c.len() == rank));
    }
}

#[test]
fn conditional_projection_matches_subspace() {
    for e in random_corpus(81, 40, 3, 8, &[CorpusClass::Projection]).unwrap() {
        let mut rng = trial_rng(82, e.index as u64);
        let n = e.kernel.n();
        let b = random_window(n, &mut rng);
        let law = enumerate_distribution(&e.kernel).unwrap();
        let marginal = law.marginal(&b);
        for s in 0..(1u64 << n) {
            if s & !b.bits() != 0 || marginal.probs[s as usize] <= 1e-9 {
                continue;
            }
            let xi = Configuration::from_bits(s);
            let c = conditional_kernel(&e.kernel, &xi, &b, &tols()).unwrap();
            let m = c.matrix.entries();
            assert!(linalg::max_abs(&(m * m - m)) <= 1e-8, "{}", e.label());
            let p = projection_conditional_subspace(&e.kernel, &xi, &b).unwrap();
            assert!(linalg::max_abs(&(m - p.entries())) <= 1e-8, "{}", e.label());
        }
    }
}

#[test]
fn sampler_matches_oracle_on_small_corpus() {
    let trials = 20_000;
    for e in random_corpus(91, 6, 2, 6, &CorpusClass::ALL).unwrap() {
        let law = enumerate_distribution(&e.kernel).unwrap();
        let batch = sample_batch(&e.kernel, 100 + e.index as u64, trials, "oracle").unwrap();
        let mut counts = vec![0usize; law.probs.len()];
        for c in &batch.configs {
            counts[c.bits() as usize] += 1;
        }
        for (s, &p) in law.probs.iter().enumerate() {
            let freq = counts[s] as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((freq - p).abs() <= 4.0 * se + 1e-12, "{} subset {s:b}: {freq} vs {p}", e.label());
        }
    }
}

#[test]
fn batches_ignore_thread_count() {
    let mut rng = trial_rng(5, 5);
    let k = factory::random_contraction(9, &mut rng).unwrap();
    let wide = sample_batch(&k, 17, 2000, "threads").unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let narrow = pool.install(|| sample_batch(&k, 17, 2000, "threads").unwrap());
    assert_eq!(wide.configs, narrow.configs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn validation_is_idempotent((k, _) in kernel_strategy(8)) {
        let again = validate_kernel(k.entries(), KernelTolerances::default()).unwrap();
        prop_assert_eq!(again.entries(), k.entries());
        prop_assert_eq!(again.is_projection(), k.is_projection());
    }

    #[test]
    fn palm_annihilates_its_points((k, seed) in kernel_strategy(8)) {
        let mut rng = trial_rng(seed, 1);
        let b = random_window(k.n(), &mut rng);
        let pts = random_points_in(&b, 3, &mut rng);
        for method in [PalmMethod::Recursive, PalmMethod::DetRatio] {
            let palm = palm_many(&k, pts.indices(), method, &tols()).unwrap();
            let m = palm.matrix.entries();
            if palm.degenerate {
                prop_assert_eq!(linalg::max_abs(m), 0.0);
            } else {
                for &p in pts.indices() {
                    prop_assert!(m.row(p).iter().chain(m.column(p).iter()).all(|z| z.norm() <= 1e-10));
                }
            }
        }
    }

    #[test]
    fn conditional_kernels_live_off_the_window((k, seed) in kernel_strategy(8)) {
        let mut rng = trial_rng(seed, 2);
        let b = random_window(k.n(), &mut rng);
        let x = random_points_in(&b, 3, &mut rng);
        let c = conditional_kernel(&k, &x, &b, &tols()).unwrap();
        let m = c.matrix.entries();
        for i in b.indices() {
            prop_assert!(m.row(i).iter().chain(m.column(i).iter()).all(|z| *z == Complex64::new(0.0, 0.0)));
        }
        if !c.status.is_regular() {
            prop_assert_eq!(linalg::max_abs(m), 0.0);
        }
        let spectrum = c.matrix.spectrum();
        prop_assert!(spectrum.iter().all(|&v| (-1e-8..=1.0 + 1e-8).contains(&v)));
    }

    #[test]
    fn oracle_is_a_distribution((k, _) in kernel_strategy(9)) {
        let law = enumerate_distribution(&k).unwrap();
        prop_assert!((law.total() - 1.0).abs() <= 1e-9);
        prop_assert!(law.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn sampling_is_reproducible((k, seed) in kernel_strategy(8)) {
        let a = sample_batch(&k, seed, 50, "repro").unwrap();
        let b = sample_batch(&k, seed, 50, "repro").unwrap();
        prop_assert_eq!(a.configs, b.configs);
    }
}
