//! Pass thresholds shared by every verification suite.

/// A distribution test passes when its p-value exceeds this.
pub const MIN_P_VALUE: f64 = 0.001;

/// Seeded claims must hold on at least this many seeds out of
/// [`SEED_MAJORITY_OF`].
pub const SEED_MAJORITY: usize = 8;
pub const SEED_MAJORITY_OF: usize = 10;

/// Allowed empirical failure rate as a multiple of the nominal `δ`.
pub const FAILURE_SLACK: f64 = 1.5;

/// Chi-square bins are pooled until each expects at least this many draws.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

/// Eigenvalue denominators below this many machine epsilons (relative to
/// the spectral scale) are treated as vanishing.
pub const DEGENERATE_GAP_FACTOR: f64 = 1e3;

/// Backward error of a dense symmetric eigensolver, in units of
/// `n·ε·‖A‖`; charged once for each of the two decompositions compared.
pub const EIGEN_BACKWARD_ERROR: f64 = 4.0;

pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-9;

/// Largest polylog exponent accepted by the sublinearity fit.
pub const MAX_POLYLOG_EXPONENT: f64 = 4.0;

/// Sampled reads may never exceed `n·d / CEILING_DIVISOR`.
pub const CEILING_DIVISOR: f64 = 4.0;

/// Fraction of sampled entries that must fall inside the composite budget.
pub const ENTRY_COVERAGE: f64 = 0.95;

/// Seeds needed out of `total` for a majority claim.
pub fn seeds_needed(total: usize) -> usize {
    (total * SEED_MAJORITY).div_ceil(SEED_MAJORITY_OF)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_rounds_up() {
        assert_eq!(seeds_needed(10), 8);
        assert_eq!(seeds_needed(5), 4);
        assert_eq!(seeds_needed(1), 1);
        assert_eq!(seeds_needed(0), 0);
    }
}
