use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::policy::{DISTRIBUTION_SUM_TOLERANCE, MIN_EXPECTED_COUNT, MIN_P_VALUE};
use super::report::{Comparison, TrialReport};
use crate::error::{Result, SfaError};
use crate::sq_core::SampleQuery;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Bins after pooling.
    pub bins: usize,
}

/// Pearson goodness of fit of `counts` to probabilities `expected`.
///
/// Adjacent bins are pooled until each expects at least
/// [`MIN_EXPECTED_COUNT`] draws; a leftover tail joins the last pooled bin.
/// Any draw landing on a zero-probability index gives an infinite statistic.
pub fn pearson(counts: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if counts.len() != expected.len() {
        return Err(SfaError::InvalidInput(format!(
            "observed support has {} outcomes, expected distribution has {}",
            counts.len(),
            expected.len()
        )));
    }
    if expected.iter().any(|p| !(*p >= 0.0)) {
        return Err(SfaError::InvalidInput("expected probabilities must be non-negative".into()));
    }
    let total_p: f64 = expected.iter().sum();
    if (total_p - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
        return Err(SfaError::InvalidInput(format!("expected probabilities sum to {total_p}")));
    }
    let m: u64 = counts.iter().sum();
    if m == 0 {
        return Err(SfaError::InvalidInput("no draws to test".into()));
    }
    if counts.iter().zip(expected).any(|(&c, &p)| p == 0.0 && c > 0) {
        return Ok(ChiSquare { statistic: f64::INFINITY, df: 0, p_value: 0.0, bins: 0 });
    }

    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(expected) {
        if p == 0.0 {
            continue;
        }
        obs += c as f64;
        exp += p * m as f64;
        if exp >= MIN_EXPECTED_COUNT {
            pooled.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => pooled.push((obs, exp)),
        }
    }
    let statistic: f64 = pooled.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = pooled.len().saturating_sub(1);
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).map_err(|e| SfaError::InvalidInput(e.to_string()))?.sf(statistic)
    };
    Ok(ChiSquare { statistic, df, p_value, bins: pooled.len() })
}

/// Draws `samples` indices from `handle` and tests them against `expected`.
pub fn chi_square_test(
    handle: &dyn SampleQuery,
    expected: &[f64],
    samples: u64,
    rng: &mut dyn RngCore,
) -> Result<TrialReport> {
    let started = std::time::Instant::now();
    if expected.len() != handle.dim() {
        return Err(SfaError::InvalidInput(format!(
            "handle has dimension {} but the expected distribution has {} outcomes",
            handle.dim(),
            expected.len()
        )));
    }
    let mut counts = vec![0u64; expected.len()];
    for _ in 0..samples {
        counts[handle.sample(rng)?] += 1;
    }
    let fit = pearson(&counts, expected)?;
    Ok(TrialReport::new("chi-square", vec![], fit.p_value, Comparison::Above, MIN_P_VALUE)
        .detail("statistic", fit.statistic)
        .detail("df", fit.df as f64)
        .detail("samples", samples as f64)
        .timed(started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sq_core::WeightTree;

    #[test]
    fn exact_counts_give_zero_statistic() {
        let fit = pearson(&[25, 75], &[0.25, 0.75]).unwrap();
        assert_eq!(fit.statistic, 0.0);
        assert!((fit.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn known_statistic() {
        // (60-50)²/50 + (40-50)²/50 = 4 on one degree of freedom.
        let fit = pearson(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((fit.statistic - 4.0).abs() < 1e-12);
        assert_eq!(fit.df, 1);
        assert!((fit.p_value - 0.0455).abs() < 1e-3);
    }

    #[test]
    fn sparse_bins_are_pooled() {
        let fit = pearson(&[98, 1, 1], &[0.98, 0.01, 0.01]).unwrap();
        assert_eq!(fit.bins, 1);
        assert_eq!(fit.df, 0);
    }

    #[test]
    fn draws_on_zero_mass_fail() {
        let fit = pearson(&[5, 5], &[1.0, 0.0]).unwrap();
        assert_eq!(fit.p_value, 0.0);
    }

    #[test]
    fn mismatched_support_is_rejected() {
        assert!(pearson(&[1, 2], &[1.0]).is_err());
        assert!(pearson(&[1, 2], &[0.5, 0.6]).is_err());
        let h = WeightTree::from_values(&[1.0, 1.0]).unwrap();
        assert!(chi_square_test(&h, &[1.0], 10, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn point_mass_handle() {
        let h = WeightTree::from_values(&[0.0, 3.0, 0.0]).unwrap();
        let r = chi_square_test(&h, &[0.0, 1.0, 0.0], 1000, &mut stream(1, 0)).unwrap();
        assert_eq!(r.details["statistic"], 0.0);
        assert!(r.passed);
    }

    #[test]
    fn biased_handle_is_caught() {
        let tree = WeightTree::from_values(&[0.6, 0.8]).unwrap();
        let r = chi_square_test(&tree, &[0.64, 0.36], 100_000, &mut stream(2, 0)).unwrap();
        assert!(!r.passed);
    }
}
