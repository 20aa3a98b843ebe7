//! Named verification suites shared by the command line and the tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audit::{entry_audit, error_budget_audit, measure, structures, AuditConfig};
use super::chi_square::{chi_square_test, pearson};
use super::davis_kahan::{davis_kahan_check, BoundStatus};
use super::policy::{seeds_needed, FAILURE_SLACK, MIN_P_VALUE};
use super::report::{Comparison, TrialReport};
use super::sublinear::{sublinearity_audit, SublinearityConfig};
use crate::error::Result;
use crate::linalg::{aligned_distance, sorted_svd, spectral_norm};
use crate::rng::{stream, streams};
use crate::sfa_exact::{
    exact_sfa, normalize, pairwise_differentiate, quadratic_expand, ConstraintCheck, Dataset, DEFAULT_EXPANSION_CAP,
};
use crate::sfa_qi::{fit, FitOptions};
use crate::sketch_ops::{approx_matmul, estimate_inner_product, fkv_approx_svd};
use crate::sq_core::{CostLedger, DenseVector, MatrixSQ, WeightTree};
use crate::synth::{blobs, low_rank, wiskott_signal, wiskott_source, BlobSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Sampling,
    Svd,
    Matmul,
    InnerProduct,
    DavisKahan,
    Exact,
    EndToEnd,
    Sublinearity,
    Audit,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Sampling,
        Suite::Svd,
        Suite::Matmul,
        Suite::InnerProduct,
        Suite::DavisKahan,
        Suite::Exact,
        Suite::EndToEnd,
        Suite::Sublinearity,
        Suite::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sampling => "sampling",
            Suite::Svd => "svd",
            Suite::Matmul => "matmul",
            Suite::InnerProduct => "inner-product",
            Suite::DavisKahan => "davis-kahan",
            Suite::Exact => "exact",
            Suite::EndToEnd => "end-to-end",
            Suite::Sublinearity => "sublinearity",
            Suite::Audit => "audit",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Whether a failure should fail the run. The per-step audit is
    /// diagnostic: its bounds are evaluated at the selected parameters,
    /// which the feasible sketch sizes do not reach for every step.
    pub fn required(self) -> bool {
        self != Suite::Audit
    }

    pub fn run(self, seed: u64) -> Result<Vec<TrialReport>> {
        let started = std::time::Instant::now();
        let mut reports = match self {
            Suite::Sampling => sampling(seed),
            Suite::Svd => svd(seed),
            Suite::Matmul => matmul(seed),
            Suite::InnerProduct => inner_product(seed),
            Suite::DavisKahan => davis_kahan(seed),
            Suite::Exact => exact(seed),
            Suite::EndToEnd => end_to_end(seed),
            Suite::Sublinearity => sublinearity(seed),
            Suite::Audit => audit(seed),
        }?;
        let elapsed = started.elapsed().as_secs_f64();
        for r in &mut reports {
            if r.runtime_secs == 0.0 {
                r.runtime_secs = elapsed;
            }
        }
        Ok(reports)
    }
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn seed_range(seed: u64, count: u64) -> Vec<u64> {
    (seed..seed + count).collect()
}

/// Chi-square fits of stored vectors and matrices, and per-draw node
/// touches against `2⌈log₂ n⌉ + 2`.
pub fn sampling(seed: u64) -> Result<Vec<TrialReport>> {
    const DRAWS: u64 = 1_000_000;
    let mut data = stream(seed, streams::DATA);
    let mut draws = stream(seed, streams::TRIALS);
    let mut reports = Vec::new();

    let values: Vec<f64> = (0..10_000).map(|_| data.sample(StandardNormal)).collect();
    let total: f64 = values.iter().map(|v| v * v).sum();
    let expected: Vec<f64> = values.iter().map(|v| v * v / total).collect();
    let mut r = chi_square_test(&WeightTree::from_values(&values)?, &expected, DRAWS, &mut draws)?;
    r.test_id = "sampling.vector-chi-square".into();
    r.seeds = vec![seed];
    reports.push(r);

    let a = gaussian(100, 100, &mut data);
    let m = MatrixSQ::build(&a, CostLedger::shared())?;
    let mut counts = vec![0u64; a.len()];
    for _ in 0..DRAWS {
        let (i, j) = m.sample_entry(&mut draws)?;
        counts[i * a.ncols() + j] += 1;
    }
    let fro = a.norm_squared();
    let expected: Vec<f64> = (0..a.len()).map(|k| a[(k / a.ncols(), k % a.ncols())].powi(2) / fro).collect();
    let fit = pearson(&counts, &expected)?;
    reports.push(
        TrialReport::new("sampling.matrix-chi-square", vec![seed], fit.p_value, Comparison::Above, MIN_P_VALUE)
            .detail("statistic", fit.statistic)
            .detail("df", fit.df as f64),
    );

    for n in [1usize << 10, 10_000, 1 << 20] {
        let ledger = CostLedger::shared();
        let vals: Vec<f64> = (0..n).map(|_| data.random::<f64>() + 1e-3).collect();
        let tree = WeightTree::build(&vals, ledger.clone())?;
        let mut worst = 0;
        for _ in 0..2000 {
            let before = ledger.snapshot().node_touches;
            tree.sample(&mut draws)?;
            worst = worst.max(ledger.snapshot().node_touches - before);
        }
        let limit = 2 * n.next_power_of_two().trailing_zeros() as u64 + 2;
        reports.push(TrialReport::new(
            format!("sampling.node-touches.n{n}"),
            vec![seed],
            worst as f64,
            Comparison::AtMost,
            limit as f64,
        ));
    }
    Ok(reports)
}

/// Approximate SVD of rank-5 `512 × 64` matrices with light noise:
/// aligned `‖V − V̂‖_F ≤ √k ε` and `|σ̂ᵢ − σᵢ| ≤ (η/10)‖A‖_F`.
pub fn svd(seed: u64) -> Result<Vec<TrialReport>> {
    const K: usize = 5;
    let (eps, eta) = (0.1, 0.2);
    let seeds = seed_range(seed, 10);
    let mut v_ok = 0;
    let mut s_ok = 0;
    let mut worst_v: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    for &s in &seeds {
        let lr = low_rank(512, 64, K, 1e-3, 10.0, s)?;
        let exact = sorted_svd(&lr.a, false);
        let v_ref = exact.v.columns(0, K).into_owned();
        let a = MatrixSQ::build(&lr.a, CostLedger::shared())?;
        let approx = fkv_approx_svd(&a, lr.sigma[K - 1] / 2.0, eps, eta, &mut stream(s, streams::SVD_X))?;
        let dist = aligned_distance(&v_ref, &approx.v_hat);
        let frob = lr.a.norm();
        let sigma_err = (0..K)
            .map(|i| approx.sigma_hat.get(i).map_or(f64::INFINITY, |&sh| (sh - exact.singular_values[i]).abs()))
            .fold(0.0, f64::max);
        worst_v = worst_v.max(dist / (K as f64).sqrt());
        worst_s = worst_s.max(sigma_err / frob);
        v_ok += usize::from(dist <= (K as f64).sqrt() * eps);
        s_ok += usize::from(sigma_err <= eta / 10.0 * frob);
    }
    let need = seeds_needed(seeds.len()) as f64;
    Ok(vec![
        TrialReport::new("svd.subspace", seeds.clone(), v_ok as f64, Comparison::AtLeast, need)
            .detail("eps", eps)
            .detail("worst_distance_over_sqrt_k", worst_v),
        TrialReport::new("svd.singular-values", seeds, s_ok as f64, Comparison::AtLeast, need)
            .detail("eta", eta)
            .detail("worst_error_over_frobenius", worst_s),
    ])
}

/// 100 product sketches of unit-Frobenius Gaussian factors at the draw
/// count implied by `(ε, δ) = (0.1, 0.1)`.
pub fn matmul(seed: u64) -> Result<Vec<TrialReport>> {
    const TRIALS: u64 = 100;
    let (eps, delta) = (0.1, 0.1);
    let mut data = stream(seed, streams::DATA);
    let a = gaussian(300, 40, &mut data);
    let a = &a / a.norm();
    let b = gaussian(40, 30, &mut data);
    let b = &b / b.norm();
    let exact = &a * &b;
    let a_t = MatrixSQ::build_transposed(&a, CostLedger::shared())?;
    let b_sq = MatrixSQ::build(&b, CostLedger::shared())?;
    let errors: Vec<f64> = (0..TRIALS)
        .into_par_iter()
        .map(|t| {
            let p = approx_matmul(&a_t, &b_sq, eps, delta, &mut stream(seed, streams::TRIALS + t))?;
            Ok((&exact - p.to_dense(&a_t)).norm())
        })
        .collect::<Result<_>>()?;
    let ok = errors.iter().filter(|&&e| e <= eps).count();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(vec![TrialReport::new("matmul.frobenius", vec![seed], ok as f64, Comparison::AtLeast, 85.0)
        .detail("trials", TRIALS as f64)
        .detail("median_error", sorted[sorted.len() / 2])
        .detail("max_error", sorted[sorted.len() - 1])])
}

/// Empirical failure rate of the median-of-means estimator over 1000
/// trials for each `(ε, δ) ∈ {0.05, 0.1}²`.
pub fn inner_product(seed: u64) -> Result<Vec<TrialReport>> {
    const TRIALS: u64 = 1000;
    let mut data = stream(seed, streams::DATA);
    let n = 1000;
    let x: Vec<f64> = (0..n).map(|_| data.sample(StandardNormal)).collect();
    let z: Vec<f64> = (0..n).map(|_| data.sample(StandardNormal)).collect();
    let unit = |v: Vec<f64>| {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect::<Vec<f64>>()
    };
    let x = unit(x);
    let y = unit(x.iter().zip(&z).map(|(a, b)| 0.6 * a + 0.8 * b / (n as f64).sqrt()).collect());
    let truth: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let xh = WeightTree::from_values(&x)?;
    let yh = DenseVector::new(y);

    let mut reports = Vec::new();
    for (c, (eps, delta)) in [(0.05, 0.05), (0.05, 0.1), (0.1, 0.05), (0.1, 0.1)].into_iter().enumerate() {
        let base = streams::TRIALS + (c as u64) * TRIALS;
        let failures: usize = (0..TRIALS)
            .into_par_iter()
            .map(|t| {
                let est = estimate_inner_product(&xh, &yh, eps, delta, &mut stream(seed, base + t))?;
                Ok(usize::from((est - truth).abs() > eps))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        reports.push(
            TrialReport::new(
                format!("inner-product.eps{eps}.delta{delta}"),
                vec![seed],
                failures as f64 / TRIALS as f64,
                Comparison::AtMost,
                FAILURE_SLACK * delta,
            )
            .detail("truth", truth),
        );
    }
    Ok(reports)
}

fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    gaussian(d, d, rng).svd(true, false).u.expect("left vectors requested")
}

/// Printed perturbation bound on 1000 random symmetric pairs whose
/// eigengaps are far above rounding, and a near-degenerate pair that must
/// be flagged rather than passed.
pub fn davis_kahan(seed: u64) -> Result<Vec<TrialReport>> {
    const PAIRS: u64 = 1000;
    let (mut violations, mut corrected, mut flagged, mut held, mut min_gap) = (0, 0, 0, 0, f64::INFINITY);
    for t in 0..PAIRS {
        let mut r = stream(seed, streams::TRIALS + t);
        let d = r.random_range(2..=8);
        let mut lam = vec![r.random_range(-1.0..1.0)];
        for _ in 1..d {
            let next = lam[lam.len() - 1] - r.random_range(0.01..1.0);
            lam.push(next);
        }
        let gap = lam.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        min_gap = min_gap.min(gap);
        let q = random_orthogonal(d, &mut r);
        let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam)) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let g = gaussian(d, d, &mut r);
        let g = &g + g.transpose();
        let scale = 10f64.powf(r.random_range(-8.0..-1.0)) * gap / spectral_norm(&g);
        let a_hat = &a + g * scale;
        let a_hat = (&a_hat + a_hat.transpose()) * 0.5;
        let dk = davis_kahan_check(&a, &a_hat)?;
        violations += dk.violations();
        corrected += dk.corrected_violations();
        flagged += dk.flagged();
        held += dk.checks.iter().filter(|c| c.status == BoundStatus::Holds).count();
    }
    let seeds = vec![seed];

    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0 + 1e-6]));
    let e = DMatrix::from_row_slice(2, 2, &[0.0, 1e-3, 1e-3, 0.0]);
    let near = davis_kahan_check(&a, &(&a + e))?;
    let silent = near.checks.iter().filter(|c| c.status == BoundStatus::Holds).count();

    Ok(vec![
        TrialReport::new("davis-kahan.random-pairs", seeds.clone(), violations as f64, Comparison::AtMost, 0.0)
            .detail("pairs", PAIRS as f64)
            .detail("checked", held as f64)
            .detail("flagged", flagged as f64)
            .detail("min_gap", min_gap),
        TrialReport::new("davis-kahan.corrected-bound", seeds.clone(), corrected as f64, Comparison::AtMost, 0.0),
        TrialReport::new("davis-kahan.near-degenerate-unflagged", seeds, silent as f64, Comparison::AtMost, 0.0)
            .detail("flagged", near.flagged() as f64),
    ])
}

/// Constraint residuals and slowness ordering of the exact solver on
/// blobs, and recovery of the toy signal's slow source.
pub fn exact(seed: u64) -> Result<Vec<TrialReport>> {
    const TOL: f64 = 1e-8;
    let ds = normalize(&blobs(&BlobSpec::new(3000, 8, 3), seed)?)?;
    let diff = pairwise_differentiate(&ds, 2000, &mut stream(seed, streams::PAIRS))?;
    let res = exact_sfa(&ds.x, &diff, 3)?;
    let c = ConstraintCheck::of(&res.unit_variance_output());
    let residual = c.max_abs_mean.max(c.max_variance_error).max(c.max_cross_correlation);
    let spectrum = res.slowness_spectrum();
    let disorder = spectrum.windows(2).filter(|w| w[1] < w[0]).count()
        + res.delta.windows(2).filter(|w| w[1] < w[0] * (1.0 - 1e-12)).count();
    let delta_mismatch = res
        .delta
        .iter()
        .zip(&spectrum)
        .map(|(d, s)| (d - s).abs() / s.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);

    let toy = wiskott_signal(4000)?;
    let expanded = normalize(&quadratic_expand(&normalize(&toy)?, DEFAULT_EXPANSION_CAP)?)?;
    let toy_diff = pairwise_differentiate(&expanded, 0, &mut stream(seed, streams::PAIRS))?;
    let toy_res = exact_sfa(&expanded.x, &toy_diff, 1)?;
    let corr = correlation(toy_res.y.column(0).as_slice(), &wiskott_source(4000)).abs();

    let seeds = vec![seed];
    Ok(vec![
        TrialReport::new("exact.constraints", seeds.clone(), residual, Comparison::AtMost, TOL)
            .detail("max_abs_mean", c.max_abs_mean)
            .detail("max_variance_error", c.max_variance_error)
            .detail("max_cross_correlation", c.max_cross_correlation),
        TrialReport::new("exact.slowness-order", seeds.clone(), disorder as f64, Comparison::AtMost, 0.0)
            .detail("delta_vs_spectrum", delta_mismatch),
        TrialReport::new("exact.toy-signal", seeds, corr, Comparison::AtLeast, 0.95),
    ])
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Blob workload used by the end-to-end, audit and sublinearity suites.
pub fn blob_workload(n: usize, seed: u64) -> Result<(Dataset, crate::sfa_exact::DiffMatrix)> {
    let ds = normalize(&blobs(&BlobSpec::new(n, 16, 3), seed)?)?;
    let diff = pairwise_differentiate(&ds, BLOB_PAIRS_PER_CLASS, &mut stream(seed, streams::PAIRS))?;
    Ok((ds, diff))
}

pub const BLOB_PAIRS_PER_CLASS: usize = 4096;

/// Sampling pipeline on ten blob datasets (`n = 4096`, `d = 16`, `J = 2`,
/// target 0.2): aligned relative output error, and entry queries on the
/// first seed against the composite budget.
pub fn end_to_end(seed: u64) -> Result<Vec<TrialReport>> {
    let opts = FitOptions::new(0.2, 2);
    let seeds = seed_range(seed, 10);
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    let mut max_reads = 0u64;
    let mut failures = Vec::new();
    let mut entries = Vec::new();
    for &s in &seeds {
        let (ds, diff) = blob_workload(4096, s)?;
        let exact = exact_sfa(&ds.x, &diff, opts.j)?;
        let (x_t, xdot_t) = structures(&ds.x, &diff.xdot)?;
        let model = match fit(x_t, xdot_t, &opts, s) {
            Ok(m) => m,
            Err(e) => {
                failures.push(format!("seed {s}: {e}"));
                continue;
            }
        };
        let m = measure(&model, &exact, &ds.x, &diff)?;
        worst = worst.max(m.relative_output_error);
        max_reads = max_reads.max(m.x_entry_reads);
        ok += usize::from(m.relative_output_error <= opts.eps_target);
        if s == seed {
            entries = entry_audit(&model, &exact, 500, 0.1, 0.1, &mut stream(s, streams::QUERY))?;
        }
    }
    let mut r = TrialReport::new(
        "end-to-end.relative-output",
        seeds.clone(),
        ok as f64,
        Comparison::AtLeast,
        seeds_needed(seeds.len()) as f64,
    )
    .detail("worst_relative_error", worst)
    .detail("max_x_entry_reads", max_reads as f64);
    for f in failures {
        r = r.flag(f);
    }
    let mut reports = vec![r];
    for mut e in entries {
        e.test_id = format!("end-to-end.{}", e.test_id);
        e.seeds = vec![seed];
        reports.push(e);
    }
    Ok(reports)
}

/// X-entry reads at `n ∈ {2¹², 2¹⁴, 2¹⁶}` with growth capped at 3.
pub fn sublinearity(seed: u64) -> Result<Vec<TrialReport>> {
    let config = SublinearityConfig {
        spec: BlobSpec::new(0, 16, 3),
        n_grid: vec![1 << 12, 1 << 14, 1 << 16],
        pairs_per_class: BLOB_PAIRS_PER_CLASS,
        fit: FitOptions::new(0.2, 2),
        seed,
        max_growth: Some(3.0),
    };
    Ok(sublinearity_audit(&config)?.0)
}

/// Per-step measured errors against their bounds on one blob dataset.
pub fn audit(seed: u64) -> Result<Vec<TrialReport>> {
    let (ds, diff) = blob_workload(4096, seed)?;
    let config = AuditConfig { fit: FitOptions::new(0.2, 2), seeds: seed_range(seed, 10) };
    Ok(error_budget_audit(&ds.x, &diff, &config)?.0)
}
