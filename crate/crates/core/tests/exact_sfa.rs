//! Exact solver invariants on seeded datasets.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use sketch_sfa::rng::stream;
use sketch_sfa::sfa_exact::{
    delta_value, difference_rows, exact_sfa, normalize, pairwise_differentiate, quadratic_expand, ConstraintCheck,
    Dataset, DEFAULT_EXPANSION_CAP,
};
use sketch_sfa::synth::{blobs, wiskott_signal, wiskott_source, BlobSpec};

fn blob_case(seed: u64) -> (Dataset, sketch_sfa::sfa_exact::DiffMatrix) {
    let ds = normalize(&blobs(&BlobSpec::new(600, 6, 3), seed).unwrap()).unwrap();
    let diff = pairwise_differentiate(&ds, 2000, &mut stream(seed, 2)).unwrap();
    (ds, diff)
}

#[test]
fn whitened_data_is_orthonormal() {
    for seed in 0..5 {
        let (ds, diff) = blob_case(seed);
        let res = exact_sfa(&ds.x, &diff, 3).unwrap();
        let z = res.whiten(&ds.x);
        let gram = z.transpose() * &z;
        assert!((gram - DMatrix::identity(6, 6)).abs().max() <= 1e-8);
    }
}

#[test]
fn slow_features_are_optimal() {
    let (ds, diff) = blob_case(11);
    let j = 4;
    let res = exact_sfa(&ds.x, &diff, j).unwrap();
    let z = res.whiten(&ds.x);
    let mut r = stream(12, 0);
    for k in 0..j {
        let dk = res.delta[k];
        for _ in 0..100 {
            let mut u = DVector::from_fn(6, |_, _| r.sample::<f64, _>(StandardNormal));
            for c in 0..k {
                let w = res.w.column(c);
                u -= w * w.dot(&u);
            }
            u /= u.norm();
            let yu = &z * &u;
            assert!(delta_value(yu.as_slice(), &diff.pairs) >= dk - 1e-9, "feature {k} beaten");
        }
    }
}

#[test]
fn whitening_and_differencing_commute() {
    let (ds, diff) = blob_case(3);
    let res = exact_sfa(&ds.x, &diff, 2).unwrap();
    let a = difference_rows(&res.whiten(&ds.x), &diff.pairs);
    let b = res.whitened_differences(&diff);
    assert!((a - b).abs().max() <= 1e-10);
}

#[test]
fn slowness_matches_whitened_spectrum() {
    let (ds, diff) = blob_case(4);
    let res = exact_sfa(&ds.x, &diff, 6).unwrap();
    let zdot = res.whitened_differences(&diff);
    let mut s: Vec<f64> = zdot.singular_values().iter().cloned().collect();
    s.sort_by(f64::total_cmp);
    for (k, dk) in res.delta.iter().enumerate() {
        let want = s[k] * s[k] / diff.len() as f64;
        assert!((dk - want).abs() <= 1e-8, "feature {k}: {dk} vs {want}");
    }
    assert!(res.delta.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn toy_signal_recovers_its_source() {
    let t = 4000;
    let ds = normalize(&wiskott_signal(t).unwrap()).unwrap();
    let ds = normalize(&quadratic_expand(&ds, DEFAULT_EXPANSION_CAP).unwrap()).unwrap();
    let diff = pairwise_differentiate(&ds, 0, &mut stream(0, 2)).unwrap();
    let res = exact_sfa(&ds.x, &diff, 1).unwrap();
    let y = res.y.column(0);
    let src = DVector::from_vec(wiskott_source(t));
    let yc = y.add_scalar(-y.mean());
    let sc = src.add_scalar(-src.mean());
    let corr = yc.dot(&sc) / (yc.norm() * sc.norm());
    assert!(corr.abs() >= 0.95, "corr {corr}");
}

#[test]
fn results_are_deterministic() {
    let (ds, diff) = blob_case(5);
    let a = serde_json::to_string(&exact_sfa(&ds.x, &diff, 2).unwrap()).unwrap();
    let b = serde_json::to_string(&exact_sfa(&ds.x, &diff, 2).unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_series_satisfy_constraints(n in 20usize..120, d in 1usize..6, seed in any::<u64>()) {
        let mut r = stream(seed, 0);
        let x = DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let ds = normalize(&Dataset::time_series(x)).unwrap();
        let diff = pairwise_differentiate(&ds, 0, &mut r).unwrap();
        let j = r.random_range(1..=ds.d());
        let res = exact_sfa(&ds.x, &diff, j).unwrap();
        let check = ConstraintCheck::of(&res.unit_variance_output());
        prop_assert!(check.holds(1e-8, 1e-8, 1e-8), "{:?}", check);
        prop_assert!(res.delta.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}
