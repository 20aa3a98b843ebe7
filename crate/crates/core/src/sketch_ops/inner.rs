//! Median-of-means inner product estimation.
//!
//! For `i ~ D_x`, `z = ‖x‖² y(i) / x(i)` has mean `⟨x, y⟩` and variance at
//! most `‖x‖²‖y‖²`. Averaging `⌈9‖x‖²‖y‖²/ε²⌉` draws misses by more than `ε`
//! with probability at most 1/9 (Chebyshev); the median of
//! `⌈6 ln(1/δ)⌉` such means misses with probability below `δ` (Chernoff).

use rand::RngCore;

use crate::error::{Result, SfaError};
use crate::sq_core::{Query, SampleQuery};

/// Tolerance used when the sampled vector's norm itself must be estimated.
pub const NORM_TOLERANCE: f64 = 0.01;

/// `(groups, group_size)`.
pub fn median_of_means_sizes(x_norm_sq: f64, y_norm_sq: f64, eps: f64, delta: f64) -> (usize, usize) {
    let groups = (6.0 * (1.0 / delta).ln()).ceil().max(1.0) as usize;
    let size = (9.0 * x_norm_sq * y_norm_sq / (eps * eps)).ceil().max(1.0) as usize;
    (groups, size)
}

pub fn estimate_inner_product<X, Y>(x: &X, y: &Y, eps: f64, delta: f64, rng: &mut dyn RngCore) -> Result<f64>
where
    X: SampleQuery + ?Sized,
    Y: Query + ?Sized,
{
    let y_norm_sq = y.norm_sq();
    estimate_with_norm(x, y, y_norm_sq, eps, delta, rng)
}

/// As [`estimate_inner_product`] with `‖y‖²` supplied by the caller.
pub fn estimate_with_norm<X, Y>(
    x: &X,
    y: &Y,
    y_norm_sq: f64,
    eps: f64,
    delta: f64,
    rng: &mut dyn RngCore,
) -> Result<f64>
where
    X: SampleQuery + ?Sized,
    Y: Query + ?Sized,
{
    if x.dim() != y.dim() {
        return Err(SfaError::InvalidInput(format!("dimensions differ: {} vs {}", x.dim(), y.dim())));
    }
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(SfaError::InvalidInput(format!("need eps > 0 and delta in (0,1), got {eps}, {delta}")));
    }
    let x_norm = x.norm_estimate(NORM_TOLERANCE, rng)?;
    let x_norm_sq = x_norm * x_norm;
    if x_norm_sq <= 0.0 {
        return Err(SfaError::DegenerateDistribution);
    }
    let (groups, size) = median_of_means_sizes(x_norm_sq, y_norm_sq, eps, delta);
    let mut means = Vec::with_capacity(groups);
    for _ in 0..groups {
        let mut sum = 0.0;
        for _ in 0..size {
            let i = x.sample(rng)?;
            sum += x_norm_sq * y.query(i) / x.query(i);
        }
        means.push(sum / size as f64);
    }
    Ok(median(&mut means))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sq_core::{DenseVector, WeightTree};

    #[test]
    fn identical_basis_vectors_are_exact() {
        let x = WeightTree::from_values(&[1.0, 0.0, 0.0]).unwrap();
        let y = DenseVector::new(vec![1.0, 0.0, 0.0]);
        let mut r = rng::stream(0, 0);
        assert_eq!(estimate_inner_product(&x, &y, 0.05, 0.1, &mut r).unwrap(), 1.0);
    }

    #[test]
    fn sizes_follow_constants() {
        assert_eq!(median_of_means_sizes(1.0, 1.0, 0.1, 0.1), (14, 900));
        assert_eq!(median_of_means_sizes(2.0, 0.5, 0.05, 0.05), (18, 3600));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn dimension_mismatch() {
        let x = WeightTree::from_values(&[1.0, 1.0]).unwrap();
        let y = DenseVector::new(vec![1.0]);
        let mut r = rng::stream(0, 0);
        assert!(estimate_inner_product(&x, &y, 0.1, 0.1, &mut r).is_err());
    }
}
