use serde::{Deserialize, Serialize};

use super::audit::structures;
use super::policy::{CEILING_DIVISOR, MAX_POLYLOG_EXPONENT};
use super::report::{Comparison, TrialReport};
use crate::error::Result;
use crate::linalg::aligned_distance;
use crate::rng::{stream, streams};
use crate::sfa_exact::{exact_sfa, normalize, pairwise_differentiate};
use crate::sfa_qi::{fit, FitOptions};
use crate::synth::{blobs, BlobSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublinearityConfig {
    /// Generator; its `n` is replaced by each grid value.
    pub spec: BlobSpec,
    pub n_grid: Vec<usize>,
    /// Fixed so the differentiated data has the same distribution at every `n`.
    pub pairs_per_class: usize,
    pub fit: FitOptions,
    pub seed: u64,
    /// Tighter cap on read growth than the polylog allowance.
    pub max_growth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub d: usize,
    /// X-entry reads of the sampling pipeline, pilot included.
    pub qi_reads: u64,
    /// X-entry reads of the exact solver.
    pub exact_reads: u64,
    pub relative_output_error: f64,
}

/// Least-squares slope `p` of `ln reads` against `ln ln n`.
pub fn polylog_exponent(points: &[(usize, u64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, r)| (r.max(1) as f64).ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 1e-12) {
        return 0.0;
    }
    xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
}

/// Measures X-entry reads of the sampling pipeline and the exact solver
/// across `n_grid`. Reports read growth between the extreme `n` against
/// `(ln n_max / ln n_min)⁴` (or `max_growth` if smaller), how far the exact
/// solver's growth is from linear, the largest ratio of reads to the
/// `n·d/4` ceiling, and the fitted polylog exponent.
pub fn sublinearity_audit(config: &SublinearityConfig) -> Result<(Vec<TrialReport>, Vec<GridPoint>)> {
    let started = std::time::Instant::now();
    let mut grid = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let spec = BlobSpec { n, ..config.spec };
        let ds = normalize(&blobs(&spec, config.seed)?)?;
        let diff = pairwise_differentiate(&ds, config.pairs_per_class, &mut stream(config.seed, streams::PAIRS))?;
        let (x_t, xdot_t) = structures(&ds.x, &diff.xdot)?;

        // The exact solver reads every entry of X once.
        let dense = x_t.read_dense().transpose();
        let exact_reads = x_t.ledger().snapshot().entry_reads;
        let exact = exact_sfa(&dense, &diff, config.fit.j)?;
        x_t.ledger().reset();

        let model = fit(x_t, xdot_t, &config.fit, config.seed)?;
        let y_hat = &ds.x * &model.b_inv_half * &model.w_hat;
        grid.push(GridPoint {
            n,
            d: ds.d(),
            qi_reads: model.x_entry_reads(),
            exact_reads,
            relative_output_error: aligned_distance(&exact.y, &y_hat) / exact.y.norm(),
        });
    }

    let lo = grid.iter().min_by_key(|g| g.n);
    let hi = grid.iter().max_by_key(|g| g.n);
    let (growth, exact_growth, allowed) = match (lo, hi) {
        (Some(lo), Some(hi)) if hi.n > lo.n => (
            hi.qi_reads as f64 / lo.qi_reads.max(1) as f64,
            hi.exact_reads as f64 / lo.exact_reads.max(1) as f64,
            ((hi.n as f64).ln() / (lo.n as f64).ln()).powi(4),
        ),
        _ => (1.0, 1.0, 1.0),
    };
    let allowed = config.max_growth.map_or(allowed, |g| g.min(allowed));
    let n_ratio = match (lo, hi) {
        (Some(lo), Some(hi)) => hi.n as f64 / lo.n as f64,
        _ => 1.0,
    };
    let ceiling_ratio = grid
        .iter()
        .map(|g| g.qi_reads as f64 / (g.n as f64 * g.d as f64 / CEILING_DIVISOR))
        .fold(0.0, f64::max);
    let points: Vec<(usize, u64)> = grid.iter().map(|g| (g.n, g.qi_reads)).collect();
    let p = polylog_exponent(&points);
    let seeds = vec![config.seed];
    let elapsed = started.elapsed().as_secs_f64();
    let mut reports = vec![
        TrialReport::new("sublinearity.growth", seeds.clone(), growth, Comparison::AtMost, allowed)
            .detail("exact_growth", exact_growth),
        TrialReport::new(
            "sublinearity.exact-baseline",
            seeds.clone(),
            (exact_growth / n_ratio - 1.0).abs(),
            Comparison::AtMost,
            0.05,
        )
        .detail("exact_growth", exact_growth),
        TrialReport::new("sublinearity.ceiling", seeds.clone(), ceiling_ratio, Comparison::AtMost, 1.0),
        TrialReport::new("sublinearity.polylog-exponent", seeds, p, Comparison::AtMost, MAX_POLYLOG_EXPONENT),
    ];
    for r in &mut reports {
        for g in &grid {
            r.details.insert(format!("qi_reads.n{}", g.n), g.qi_reads as f64);
        }
        r.runtime_secs = elapsed;
    }
    Ok((reports, grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_exact_polylog() {
        let pts: Vec<(usize, u64)> = [1usize << 10, 1 << 14, 1 << 18]
            .iter()
            .map(|&n| (n, (3.0 * (n as f64).ln().powi(2)).round() as u64))
            .collect();
        assert!((polylog_exponent(&pts) - 2.0).abs() < 0.01);
    }

    #[test]
    fn constant_grid_has_zero_exponent() {
        assert_eq!(polylog_exponent(&[(4096, 100), (4096, 120)]), 0.0);
    }
}
