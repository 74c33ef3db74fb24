use dppcond::kernel::factory;
use dppcond::linalg::{CMatrix, CVector};
use dppcond::sampling::trial_rng;
use dppcond::verification::corpus::{random_corpus, random_outside_projection, random_points_in, random_test_function, CorpusClass};
use dppcond::verification::*;
use dppcond::{Configuration, DppError, KernelMatrix, SiteSubset};
use num_complex::Complex64;

fn half_ones() -> KernelMatrix {
    factory::uniform_rank1(2).unwrap()
}

fn third_ones() -> KernelMatrix {
    factory::uniform_rank1(3).unwrap()
}

fn set(n: usize, idx: &[usize]) -> SiteSubset {
    SiteSubset::from_indices(n, idx).unwrap()
}

fn unit(n: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[i] = Complex64::new(1.0, 0.0);
    v
}

fn diag() -> KernelMatrix {
    factory::diagonal(&[0.2, 0.5, 0.7, 0.9, 0.1]).unwrap()
}

#[test]
fn one_step_martingale_hand_case() {
    let r = check_one_step_martingale(&half_ones(), &set(2, &[0]), &CheckContext::exact()).unwrap();
    assert!(r.pass);
    assert!(r.statistic <= 1e-12);
    assert_eq!(r.mode, Mode::Exact);
}

#[test]
fn one_step_martingale_diagonal_and_mc() {
    let r = check_one_step_martingale(&diag(), &set(5, &[1, 3]), &CheckContext::exact()).unwrap();
    assert!(r.component("mean_residual").unwrap().statistic <= 1e-15);
    let r = check_one_step_martingale(&third_ones(), &set(3, &[0]), &CheckContext::monte_carlo(4000, 3)).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(r.mode, Mode::MonteCarlo);
}

#[test]
fn local_identities_hand_cases() {
    let k = third_ones();
    let b = set(3, &[0]);
    let q = CMatrix::from_fn(3, 3, |i, j| if i == 2 && j == 2 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    let pts = Configuration::new(vec![0], 3).unwrap();
    let r = check_local_identities(&k, &b, &q, &pts, &CheckContext::exact()).unwrap();
    assert!(r.statistic <= 1e-12, "{r:?}");

    // Coordinate projection off the window.
    let mut rng = trial_rng(4, 0);
    let k = factory::random_contraction(6, &mut rng).unwrap();
    let b = set(6, &[1, 4]);
    let q = CMatrix::from_fn(6, 6, |i, j| if i == j && (i == 0 || i == 5) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    let pts = Configuration::new(vec![4], 6).unwrap();
    let r = check_local_identities(&k, &b, &q, &pts, &CheckContext::exact()).unwrap();
    assert!(r.statistic <= 1e-12, "{r:?}");
}

#[test]
fn local_identities_reject_bad_projections() {
    let k = third_ones();
    let b = set(3, &[0]);
    let pts = Configuration::empty();
    let not_proj = CMatrix::identity(3, 3) * Complex64::new(0.5, 0.0);
    assert!(matches!(
        check_local_identities(&k, &b, &not_proj, &pts, &CheckContext::exact()),
        Err(DppError::InvalidProjection { .. })
    ));
    let touches_b = CMatrix::identity(3, 3);
    assert!(matches!(
        check_local_identities(&k, &b, &touches_b, &pts, &CheckContext::exact()),
        Err(DppError::RangeNotDisjoint { .. })
    ));
}

#[test]
fn local_identities_random_instance() {
    let mut rng = trial_rng(8, 8);
    let k = factory::random_contraction(8, &mut rng).unwrap();
    let b = set(8, &[0, 3, 6]);
    let q = factory::random_projection_avoiding(&b, 2, &mut rng).unwrap();
    let pts = random_points_in(&b, 2, &mut rng);
    let r = check_local_identities(&k, &b, &q, &pts, &CheckContext::exact()).unwrap();
    assert!(r.pass && r.statistic <= 1e-9, "{r:?}");
}

#[test]
fn two_window_commutation_cases() {
    let r = check_two_window_commutation(&third_ones(), &set(3, &[0]), &set(3, &[1]), &CheckContext::exact()).unwrap();
    assert!(r.statistic <= 1e-12, "{r:?}");
    let r = check_two_window_commutation(&diag(), &set(5, &[0, 2]), &set(5, &[4]), &CheckContext::exact()).unwrap();
    assert_eq!(r.component("a_then_b").unwrap().statistic, 0.0);
    assert!(matches!(
        check_two_window_commutation(&diag(), &set(5, &[0, 2]), &set(5, &[2]), &CheckContext::exact()),
        Err(DppError::WindowsOverlap)
    ));
    let mut rng = trial_rng(7, 7);
    let k = factory::random_contraction(7, &mut rng).unwrap();
    let r = check_two_window_commutation(&k, &set(7, &[0, 1]), &set(7, &[5]), &CheckContext::exact()).unwrap();
    assert!(r.pass && r.statistic <= 1e-9, "{r:?}");
}

#[test]
fn martingale_sequence_hand_case() {
    let k = third_ones();
    let windows = [set(3, &[0]), set(3, &[0, 1])];
    let w = set(3, &[0, 1]);
    let r = check_martingale_sequence(&k, &windows, &w, &unit(3, 2), &CheckContext::exact()).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.component("order1").unwrap().statistic <= 1e-12);
}

#[test]
fn martingale_sequence_validates_inputs() {
    let k = third_ones();
    let w = set(3, &[0, 1]);
    let bad_nesting = [set(3, &[0, 1]), set(3, &[0])];
    assert!(matches!(
        check_martingale_sequence(&k, &bad_nesting, &w, &unit(3, 2), &CheckContext::exact()),
        Err(DppError::NotNested(_))
    ));
    let windows = [set(3, &[0])];
    assert!(check_martingale_sequence(&k, &windows, &w, &unit(3, 1), &CheckContext::exact()).is_err());
}

#[test]
fn martingale_sequence_random_and_mc() {
    let mut rng = trial_rng(5, 1);
    let k = factory::random_contraction(8, &mut rng).unwrap();
    let windows = [set(8, &[2]), set(8, &[2, 5]), set(8, &[2, 5, 0])];
    let w = set(8, &[0, 2, 5, 7]);
    let phi = random_test_function(&w.complement(), false, &mut rng);
    let r = check_martingale_sequence(&k, &windows, &w, &phi, &CheckContext::exact()).unwrap();
    assert!(r.component("order1").unwrap().statistic <= 1e-9, "{r:?}");
    assert!(r.component("exterior2").unwrap().statistic <= 1e-8, "{r:?}");
    let r = check_martingale_sequence(&k, &windows, &w, &phi, &CheckContext::monte_carlo(4000, 9)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn variance_hand_case_is_one_quarter() {
    let r = check_variance_bound(&half_ones(), &set(2, &[0]), &unit(2, 1), &CheckContext::exact()).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(r.details["variance"].as_f64().unwrap(), 0.25);
    assert_eq!(r.details["bound"].as_f64().unwrap(), 0.25);
}

#[test]
fn variance_zero_for_diagonal() {
    let phi = unit(5, 2) + unit(5, 4);
    let r = check_variance_bound(&diag(), &set(5, &[0, 1]), &phi, &CheckContext::exact()).unwrap();
    assert!(r.pass);
    assert_eq!(r.details["variance"].as_f64().unwrap(), 0.0);
}

#[test]
fn variance_bound_random_contractions_mc() {
    let mut rng = trial_rng(6, 6);
    let k = factory::random_contraction(6, &mut rng).unwrap();
    let b = set(6, &[0, 1]);
    let phi = random_test_function(&b.complement(), false, &mut rng);
    let r = check_variance_bound(&k, &b, &phi, &CheckContext::monte_carlo(5000, 1)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn completeness_trivial_cases() {
    let r = check_completeness(&factory::uniform_rank1(5).unwrap(), None, &CheckContext::exact()).unwrap();
    assert!(r.pass && r.statistic == 0.0, "{r:?}");
    let r = check_completeness(&factory::identity(4), None, &CheckContext::exact()).unwrap();
    assert!(r.pass, "{r:?}");
    assert!((r.details["min_gram_det"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(
        check_completeness(&diag(), None, &CheckContext::exact()),
        Err(DppError::NotAProjection)
    ));
}

#[test]
fn completeness_rank_three_sampling() {
    let mut rng = trial_rng(3, 3);
    let k = factory::random_projection(8, 3, &mut rng).unwrap();
    let r = check_completeness(&k, None, &CheckContext::monte_carlo(10_000, 2)).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(r.statistic, 0.0);
    assert!(r.details["min_gram_det"].as_f64().unwrap() > 0.0);
}

#[test]
fn tail_mixing_diagonal_is_zero() {
    let k = factory::diagonal(&[0.3; 10]).unwrap();
    let d = set(10, &[0, 1]);
    for ctx in [CheckContext::exact(), CheckContext::monte_carlo(200, 1)] {
        let r = check_tail_mixing(&k, &d, &[2, 4, 8], &ctx).unwrap();
        assert!(r.pass, "{r:?}");
        for depth in r.details["depths"].as_array().unwrap() {
            assert_eq!(depth["kernel_mean"].as_f64().unwrap(), 0.0);
            assert_eq!(depth["event_mean"].as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn tail_mixing_rank_one_exact_reaches_zero() {
    let k = factory::uniform_rank1(12).unwrap();
    let d = set(12, &[0, 1]);
    let r = check_tail_mixing(&k, &d, &[2, 5, 10], &CheckContext::exact()).unwrap();
    let depths = r.details["depths"].as_array().unwrap();
    let events: Vec<f64> = depths.iter().map(|d| d["event_mean"].as_f64().unwrap()).collect();
    assert!(events.windows(2).all(|p| p[1] <= p[0]), "{events:?}");
    assert!(events[2] < 1e-12);
    assert!(depths[2]["kernel_mean"].as_f64().unwrap() < 1e-12);
}

#[test]
fn tail_mixing_is_deterministic() {
    let (k, _) = factory::sine_kernel(32, 4.0).unwrap();
    let d = SiteSubset::range(32, 0, 4).unwrap();
    let ctx = CheckContext::monte_carlo(500, 77);
    let a = check_tail_mixing(&k, &d, &[4, 8, 12], &ctx).unwrap();
    let b = check_tail_mixing(&k, &d, &[4, 8, 12], &ctx).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn measure_consistency_cases() {
    let r = check_measure_consistency(&half_ones(), &set(2, &[0]), &set(2, &[0]), &set(2, &[1]), &CheckContext::exact()).unwrap();
    assert!(r.pass && r.statistic <= 1e-12, "{r:?}");
    let r = check_measure_consistency(&diag(), &set(5, &[1]), &set(5, &[0]), &set(5, &[3]), &CheckContext::exact()).unwrap();
    assert_eq!(r.component("bayes_tv").unwrap().statistic, 0.0);
    let mut rng = trial_rng(2, 8);
    let k = factory::random_contraction(8, &mut rng).unwrap();
    let r = check_measure_consistency(&k, &set(8, &[1, 2]), &set(8, &[0, 4]), &set(8, &[6]), &CheckContext::exact()).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn exact_checks_refuse_oversized_kernels() {
    let k = factory::diagonal(&[0.5; 16]).unwrap();
    let err = check_one_step_martingale(&k, &set(16, &[0]), &CheckContext::exact()).unwrap_err();
    assert!(matches!(err, DppError::TooLarge { .. }), "{err:?}");
}

#[test]
fn monte_carlo_agrees_with_exact() {
    let corpus = random_corpus(11, 6, 3, 6, &[CorpusClass::Contraction, CorpusClass::Complex]).unwrap();
    for e in &corpus {
        let b = set(e.kernel.n(), &[0]);
        let exact = check_one_step_martingale(&e.kernel, &b, &CheckContext::exact()).unwrap();
        let mc = check_one_step_martingale(&e.kernel, &b, &CheckContext::monte_carlo(3000, e.index as u64)).unwrap();
        assert!(exact.pass && mc.pass, "{exact:?} {mc:?}");
    }
    let mut rng = trial_rng(1, 1);
    let k = factory::random_contraction(5, &mut rng).unwrap();
    let b = set(5, &[0, 1]);
    let q = random_outside_projection(&b, 2, &mut rng).unwrap();
    let pts = Configuration::new(vec![1], 5).unwrap();
    let mc = check_local_identities(&k, &b, &q, &pts, &CheckContext::monte_carlo(500, 4)).unwrap();
    assert!(mc.pass, "{mc:?}");
}
