//! Sketching primitives against dense references.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use sketch_sfa::rng::stream;
use sketch_sfa::sketch_ops::{fkv_approx_svd, sample_product, MatVec};
use sketch_sfa::sq_core::{CostLedger, MatrixSQ, Query, SampleQuery, WeightTree};
use sketch_sfa::sketch_ops::estimate_inner_product;
use sketch_sfa::synth::low_rank;
use sketch_sfa::verify::pearson;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = stream(seed, 0);
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn spectral(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

#[test]
fn right_vectors_are_near_isometries() {
    let (eps, eta) = (0.1, 0.2);
    for seed in 0..20 {
        let lr = low_rank(1024, 48, 4, 1e-3, 10.0, seed).unwrap();
        let a = MatrixSQ::build(&lr.a, CostLedger::shared()).unwrap();
        let svd = fkv_approx_svd(&a, lr.sigma[3] / 2.0, eps, eta, &mut stream(seed, 1)).unwrap();
        let gram = svd.v_hat.transpose() * &svd.v_hat;
        let err = spectral(&(gram - DMatrix::identity(svd.rank, svd.rank)));
        assert!(err <= 10.0 * eta * eps * eps, "seed {seed}: ‖V̂ᵀV̂ − I‖ = {err}");
    }
}

/// Averages of independent product sketches approach `AB` at rate `k^{-1/2}`.
#[test]
fn product_sketch_is_unbiased() {
    let a = gaussian(120, 40, 1);
    let b = gaussian(40, 30, 2);
    let exact = &a * &b;
    let a_t = MatrixSQ::build_transposed(&a, CostLedger::shared()).unwrap();
    let b_sq = MatrixSQ::build(&b, CostLedger::shared()).unwrap();
    let mut sum = DMatrix::zeros(120, 30);
    let checkpoints = [5usize, 10, 20, 50, 100, 200];
    let mut points = Vec::new();
    for k in 1..=200usize {
        let p = sample_product(&a_t, &b_sq, 10, 1.0, 0.1, &mut stream(3, k as u64)).unwrap();
        sum += p.to_dense(&a_t);
        if checkpoints.contains(&k) {
            let err = (&sum / k as f64 - &exact).norm();
            points.push(((k as f64).ln(), err.ln()));
        }
    }
    let m = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / m, points.iter().map(|p| p.1).sum::<f64>() / m);
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
}

#[test]
fn matvec_queries_ignore_sampling() {
    let v = gaussian(50, 6, 4);
    let w = vec![0.5, -1.0, 0.0, 2.0, 0.25, -0.75];
    let vt = MatrixSQ::build_transposed(&v, CostLedger::shared()).unwrap();
    let h = MatVec::new(&vt, w.clone()).unwrap();
    let exact = &v * DVector::from_vec(w);
    let before: Vec<f64> = (0..50).map(|i| h.query(i)).collect();
    let mut rng = stream(9, 0);
    for _ in 0..1000 {
        h.sample(&mut rng).unwrap();
    }
    for i in 0..50 {
        assert_eq!(h.query(i), before[i]);
        assert!((before[i] - exact[i]).abs() <= 1e-12 * exact.norm());
    }
}

#[test]
fn matvec_samples_follow_output_mass() {
    let v = gaussian(12, 4, 5);
    let w = vec![1.0, -0.5, 0.3, 0.8];
    let vt = MatrixSQ::build_transposed(&v, CostLedger::shared()).unwrap();
    let h = MatVec::new(&vt, w.clone()).unwrap();
    let vw = &v * DVector::from_vec(w);
    let expected: Vec<f64> = vw.iter().map(|x| x * x / vw.norm_squared()).collect();
    let mut counts = vec![0u64; 12];
    let mut rng = stream(6, 0);
    for _ in 0..100_000 {
        counts[h.sample(&mut rng).unwrap()] += 1;
    }
    let t = pearson(&counts, &expected).unwrap();
    assert!(t.p_value > 0.001, "p = {}", t.p_value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A product sketch drawing every inner index in proportion recovers
    /// the product of rank-one factors exactly.
    #[test]
    fn single_inner_index_is_exact(u in prop::collection::vec(-5f64..5.0, 1..10), v in prop::collection::vec(-5f64..5.0, 1..10), seed in any::<u64>()) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3));
        let a = DMatrix::from_column_slice(u.len(), 1, &u);
        let b = DMatrix::from_row_slice(1, v.len(), &v);
        let a_t = MatrixSQ::build_transposed(&a, CostLedger::shared()).unwrap();
        let b_sq = MatrixSQ::build(&b, CostLedger::shared()).unwrap();
        let p = sample_product(&a_t, &b_sq, 3, 1.0, 0.1, &mut stream(seed, 0)).unwrap();
        let err = (p.to_dense(&a_t) - &a * &b).norm();
        prop_assert!(err <= 1e-10 * (a.norm() * b.norm()).max(1.0));
    }

    /// Inner products of a vector with itself are estimated without
    /// variance: every draw contributes `‖x‖²`.
    #[test]
    fn self_inner_product_is_exact(x in prop::collection::vec(-3f64..3.0, 1..40), seed in any::<u64>()) {
        prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
        let tree = WeightTree::from_values(&x).unwrap();
        let est = estimate_inner_product(&tree, &tree, 0.5, 0.2, &mut stream(seed, 0)).unwrap();
        let want: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!((est - want).abs() <= 1e-9 * want);
    }
}
