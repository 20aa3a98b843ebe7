//! Sampling pipeline against the exact solver on blob workloads.

use nalgebra::DMatrix;
use sketch_sfa::linalg::aligned_distance;
use sketch_sfa::rng::stream;
use sketch_sfa::sfa_exact::{exact_sfa, SfaResult};
use sketch_sfa::sfa_qi::{fit, fit_with, FitOptions, QiSfaModel, QueryMode};
use sketch_sfa::synth::BlobSpec;
use sketch_sfa::verify::suites::blob_workload;
use sketch_sfa::verify::{pearson, structures, sublinearity_audit, SublinearityConfig};
use sketch_sfa::{PipelineStep, SfaError};

struct Case {
    x: DMatrix<f64>,
    exact: SfaResult,
    model: QiSfaModel,
}

fn case(seed: u64, opts: &FitOptions) -> Case {
    let (ds, diff) = blob_workload(4096, seed).unwrap();
    let exact = exact_sfa(&ds.x, &diff, opts.j).unwrap();
    let (x_t, xdot_t) = structures(&ds.x, &diff.xdot).unwrap();
    let model = fit(x_t, xdot_t, opts, seed).unwrap();
    Case { x: ds.x, exact, model }
}

fn majority(hits: usize) {
    assert!(hits >= 8, "{hits}/10 seeds");
}

/// With a sketch large enough for the whitening step, its error stays
/// inside `√d ε₁ (1 + η₁ε₁²) + ε₂`.
#[test]
fn whitened_data_error_within_bound() {
    let mut opts = FitOptions::new(0.2, 2);
    opts.sizing.row_constant = 1.0;
    let mut hits = 0;
    for seed in 0..10 {
        let c = case(seed, &opts);
        let p = &c.model.params;
        let d = c.x.ncols() as f64;
        let bound = d.sqrt() * p.eps1 * (1.0 + p.eta1 * p.eps1 * p.eps1) + p.eps2;
        let err = (c.exact.whiten(&c.x) - &c.x * &c.model.b_inv_half).norm();
        hits += usize::from(err <= bound);
    }
    majority(hits);
}

#[test]
fn inverse_root_error_within_bound() {
    let opts = FitOptions::new(0.2, 2);
    let mut hits = 0;
    for seed in 0..10 {
        let c = case(seed, &opts);
        let p = &c.model.params;
        let r = (c.model.svd_x.rank as f64).sqrt();
        let theta = c.exact.theta;
        let bound = r * p.eps1 / theta + (1.0 + r * p.eps1) * (2.0 + r * p.eps1) / theta + p.eps3;
        let err = (&c.exact.b_inv_half - &c.model.b_inv_half).norm();
        hits += usize::from(err <= bound);
    }
    majority(hits);
}

#[test]
fn output_error_within_composite_bound() {
    let opts = FitOptions::new(0.2, 2);
    let mut within = 0;
    let mut relative = 0;
    for seed in 0..10 {
        let c = case(seed, &opts);
        let err = aligned_distance(&c.exact.y, &c.model.dense_output().unwrap());
        within += usize::from(err <= c.model.params.predicted.total_printed);
        relative += usize::from(err / c.exact.y.norm() <= 0.2);
        assert!(c.model.x_entry_reads() as usize <= 4096 * 16 / 4);
    }
    majority(within);
    majority(relative);
}

#[test]
fn fits_are_bit_reproducible() {
    let opts = FitOptions::new(0.2, 2);
    let a = case(3, &opts).model;
    let b = case(3, &opts).model;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let draws = |m: &QiSfaModel| {
        let mut r = stream(1, 0);
        (0..200).map(|_| m.sample_output_row(17, &mut r).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draws(&a), draws(&b));
    let q = |m: &QiSfaModel| m.query_entry(5, 1, QueryMode::Estimated, 0.05, 0.1, &mut stream(2, 0)).unwrap();
    assert_eq!(q(&a).to_bits(), q(&b).to_bits());
}

#[test]
fn output_samples_follow_dense_row() {
    let c = case(4, &FitOptions::new(0.2, 2));
    let y_hat = c.model.dense_output().unwrap();
    let mut r = stream(5, 0);
    for i in [0usize, 100, 2049] {
        let row = y_hat.row(i);
        let expected: Vec<f64> = row.iter().map(|v| v * v / row.norm_squared()).collect();
        let mut counts = vec![0u64; 2];
        for _ in 0..20_000 {
            counts[c.model.sample_output_row(i, &mut r).unwrap()] += 1;
        }
        let t = pearson(&counts, &expected).unwrap();
        assert!(t.p_value > 0.001, "row {i}: p = {}", t.p_value);
    }
}

#[test]
fn single_feature_samples_its_only_column() {
    let c = case(6, &FitOptions::new(0.2, 1));
    let mut r = stream(6, 0);
    assert!((0..100).all(|_| c.model.sample_output_row(7, &mut r).unwrap() == 0));
}

#[test]
fn exact_queries_match_dense_output() {
    let c = case(7, &FitOptions::new(0.2, 2));
    let y_hat = c.model.dense_output().unwrap();
    let mut r = stream(7, 0);
    for i in [0usize, 1, 999, 4095] {
        for j in 0..2 {
            let v = c.model.query_entry(i, j, QueryMode::Exact, 0.1, 0.1, &mut r).unwrap();
            assert!((v - y_hat[(i, j)]).abs() <= 1e-12);
        }
    }
}

#[test]
fn empty_product_spectrum_is_tagged() {
    let (ds, diff) = blob_workload(4096, 1).unwrap();
    let (x_t, xdot_t) = structures(&ds.x, &diff.xdot).unwrap();
    // A retention threshold above every singular value of the product.
    let err = fit_with(x_t, xdot_t, &FitOptions::new(0.2, 2), 1, |p| p.gamma_threshold = 1e6).unwrap_err();
    assert_eq!(err.step(), Some(PipelineStep::SvdProduct));
    assert!(matches!(err.root(), SfaError::EmptySpectrum { .. }), "{err}");
}

/// Entry reads fit `c·(ln n)^p` with `p ≤ 4` and stay under `n·d/4`.
#[test]
fn entry_reads_grow_polylogarithmically() {
    let config = SublinearityConfig {
        spec: BlobSpec::new(0, 16, 3),
        n_grid: vec![1 << 12, 1 << 14, 1 << 16, 1 << 18],
        pairs_per_class: 4096,
        fit: FitOptions::new(0.2, 2),
        seed: 0,
        max_growth: None,
    };
    let (reports, grid) = sublinearity_audit(&config).unwrap();
    for g in &grid {
        assert!(g.qi_reads as f64 <= g.n as f64 * g.d as f64 / 4.0, "n = {}: {} reads", g.n, g.qi_reads);
    }
    let points: Vec<(f64, f64)> = grid.iter().map(|g| ((g.n as f64).ln().ln(), (g.qi_reads as f64).ln())).collect();
    let m = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / m, points.iter().map(|p| p.1).sum::<f64>() / m);
    let p = points.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum::<f64>()
        / points.iter().map(|q| (q.0 - mx).powi(2)).sum::<f64>();
    assert!(p <= 4.0, "exponent {p}");
    let lib = reports.iter().find(|r| r.test_id == "sublinearity.polylog-exponent").unwrap();
    assert!((lib.statistic - p).abs() <= 1e-9);
}
