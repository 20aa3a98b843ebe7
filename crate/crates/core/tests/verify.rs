//! Verification harness: perturbation checks, goodness of fit, reports.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use sketch_sfa::rng::stream;
use sketch_sfa::sq_core::WeightTree;
use sketch_sfa::verify::{chi_square_test, davis_kahan_check, pearson, BoundStatus, Suite};

fn symmetric_pair(d: usize, gap_exp: f64, pert_exp: f64, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let mut r = stream(seed, 0);
    let mut lam = vec![r.random_range(-1.0..1.0)];
    for _ in 1..d {
        let step = 10f64.powf(gap_exp) * r.random_range(1.0..10.0);
        lam.push(lam[lam.len() - 1] - step);
    }
    let gap = lam.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    let g = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let q = g.svd(true, false).u.unwrap();
    let a = &q * DMatrix::from_diagonal(&DVector::from_vec(lam)) * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let e = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
    let e = &e + e.transpose();
    let e_norm = e.singular_values().max();
    let a_hat = &a + e * (10f64.powf(pert_exp) * gap / e_norm);
    let a_hat = (&a_hat + a_hat.transpose()) * 0.5;
    (a, a_hat, gap)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn davis_kahan_never_violated(d in 2usize..9, gap_exp in -12.0f64..0.0, pert_exp in -8.0f64..-0.5, seed in any::<u64>()) {
        let (a, a_hat, gap) = symmetric_pair(d, gap_exp, pert_exp, seed);
        prop_assume!(gap > 1e3 * f64::EPSILON);
        let dk = davis_kahan_check(&a, &a_hat).unwrap();
        for c in &dk.checks {
            prop_assert!(c.status != BoundStatus::Violated, "{:?} (gap {gap:e}, ‖E‖ {:e})", c, dk.perturbation_norm);
        }
    }
}

#[test]
fn near_degenerate_pairs_are_flagged() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.0 + 1e-15]));
    let e = DMatrix::from_fn(3, 3, |i, j| if i != j { 1e-6 } else { 0.0 });
    let dk = davis_kahan_check(&a, &(&a + e)).unwrap();
    assert!(dk.flagged() >= 2);
    assert!(dk.checks.iter().skip(1).all(|c| c.status != BoundStatus::Holds));
}

#[test]
fn asymmetric_input_is_rejected() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(davis_kahan_check(&a, &a).is_err());
}

#[test]
fn chi_square_rejects_a_biased_sampler() {
    let handle = WeightTree::from_values(&[0.6, 0.8]).unwrap();
    let fair = chi_square_test(&handle, &[0.36, 0.64], 100_000, &mut stream(1, 0)).unwrap();
    assert!(fair.passed);
    let skewed = chi_square_test(&handle, &[0.4, 0.6], 100_000, &mut stream(1, 0)).unwrap();
    assert!(!skewed.passed);
}

#[test]
fn pearson_statistic_by_hand() {
    // (45 − 50)²/50 + (55 − 50)²/50 = 1 on one degree of freedom.
    let t = pearson(&[45, 55], &[0.5, 0.5]).unwrap();
    assert!((t.statistic - 1.0).abs() < 1e-12);
    assert_eq!(t.df, 1);
    assert!((t.p_value - 0.317_310_507_862_914).abs() < 1e-9);
}

#[test]
fn reports_are_reproducible_from_their_seeds() {
    for suite in [Suite::Matmul, Suite::Svd, Suite::DavisKahan] {
        let a = serde_json::to_string(&suite.run(21).unwrap()).unwrap();
        let b = serde_json::to_string(&suite.run(21).unwrap()).unwrap();
        assert_eq!(a, b, "{}", suite.name());
    }
}

#[test]
fn most_well_separated_checks_are_informative() {
    let (mut holds, mut total) = (0, 0);
    for seed in 0..300u64 {
        let mut r = stream(seed, 1);
        let (a, a_hat, _) = symmetric_pair(r.random_range(2..9), r.random_range(-12.0..0.0), r.random_range(-8.0..-0.5), seed);
        let dk = davis_kahan_check(&a, &a_hat).unwrap();
        holds += dk.checks.iter().filter(|c| c.status == BoundStatus::Holds).count();
        total += dk.checks.len();
    }
    assert!(holds * 4 >= total * 3, "{holds} of {total} checks informative");
}
