use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::DiffMatrix;
use crate::error::{Result, SfaError};
use crate::linalg::{mat_serde, sign_of_dominant, sorted_svd};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Singular values closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactOptions {
    /// Whiten with the pseudo-inverse instead of failing on rank deficiency.
    pub pseudo_inverse: bool,
}

/// Exact slow features.
///
/// `w` holds the `J` slowest right singular vectors of `Ż = Ẋ B^{-1/2}`
/// (slowest first), so `Y = Z w` with `Z = X B^{-1/2}`. The equivalent
/// weights on the raw inputs are `weights_x = B^{-1/2} w`, which satisfy
/// `weights_xᵀ B weights_x = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfaResult {
    pub j: usize,
    #[serde(with = "mat_serde")]
    pub w: DMatrix<f64>,
    #[serde(with = "mat_serde")]
    pub weights_x: DMatrix<f64>,
    #[serde(skip)]
    pub y: DMatrix<f64>,
    #[serde(with = "mat_serde")]
    pub b: DMatrix<f64>,
    #[serde(with = "mat_serde")]
    pub b_inv_half: DMatrix<f64>,
    /// Singular values of `X`, descending.
    pub x_singular_values: Vec<f64>,
    pub theta: f64,
    /// Singular values of `Ż`, descending.
    pub zdot_singular_values: Vec<f64>,
    pub gamma: f64,
    /// `σ_i² − σ_{i+1}²` for `X`.
    pub x_gaps: Vec<f64>,
    /// `σ_i² − σ_{i+1}²` for `Ż`.
    pub zdot_gaps: Vec<f64>,
    /// Slowness of each output column.
    pub delta: Vec<f64>,
    pub pair_count: usize,
    pub x_frobenius: f64,
    pub xdot_frobenius: f64,
    pub x_spectral: f64,
    pub xdot_spectral: f64,
}

fn squared_gaps(s: &[f64]) -> Vec<f64> {
    s.windows(2).map(|w| w[0] * w[0] - w[1] * w[1]).collect()
}

pub fn exact_sfa(x: &DMatrix<f64>, diff: &DiffMatrix, j: usize) -> Result<SfaResult> {
    exact_sfa_with(x, diff, j, ExactOptions::default())
}

pub fn exact_sfa_with(x: &DMatrix<f64>, diff: &DiffMatrix, j: usize, opts: ExactOptions) -> Result<SfaResult> {
    let d = x.ncols();
    if j == 0 || j > d {
        return Err(SfaError::InvalidInput(format!("J must lie in 1..={d}, got {j}")));
    }
    if diff.xdot.ncols() != d {
        return Err(SfaError::InvalidInput(format!("difference matrix has {} columns, data has {d}", diff.xdot.ncols())));
    }
    if diff.is_empty() {
        return Err(SfaError::InvalidInput("no difference rows".into()));
    }
    if x.nrows() < d {
        return Err(SfaError::RankDeficient { theta: 0.0 });
    }

    let svd_x = sorted_svd(x, false);
    let sx: Vec<f64> = svd_x.singular_values.iter().copied().collect();
    let theta = *sx.last().expect("d >= 1");
    let floor = RANK_TOLERANCE * sx[0];
    if theta <= floor && !opts.pseudo_inverse {
        return Err(SfaError::RankDeficient { theta });
    }
    let inv: Vec<f64> = sx.iter().map(|&s| if s > floor { 1.0 / s } else { 0.0 }).collect();
    let mut scaled = svd_x.v.clone();
    for (l, mut col) in scaled.column_iter_mut().enumerate() {
        col *= inv[l];
    }
    let b_inv_half = &scaled * svd_x.v.transpose();
    let b = x.transpose() * x;

    let zdot = &diff.xdot * &b_inv_half;
    let svd_z = sorted_svd(&zdot, false);
    let sz: Vec<f64> = svd_z.singular_values.iter().copied().collect();
    // Ż may have fewer rows than columns; pad with zero singular values and
    // an orthonormal completion of the null space.
    let (sz_full, vz_full) = complete_right_basis(&sz, &svd_z.v, d);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (sz_full[a], sz_full[b]);
        if (sa - sb).abs() <= TIE_TOLERANCE {
            lexicographic(vz_full.column(a).as_slice(), vz_full.column(b).as_slice())
        } else {
            sa.total_cmp(&sb)
        }
    });
    let w = DMatrix::from_fn(d, j, |r, c| vz_full[(r, order[c])]);
    let weights_x = &b_inv_half * &w;
    let y = x * &weights_x;
    let delta = (0..j).map(|c| delta_value(y.column(c).as_slice(), &diff.pairs)).collect::<Vec<_>>();

    Ok(SfaResult {
        j,
        w,
        weights_x,
        y,
        b,
        b_inv_half,
        x_gaps: squared_gaps(&sx),
        x_singular_values: sx,
        theta,
        gamma: *sz_full.iter().min_by(|a, b| a.total_cmp(b)).expect("d >= 1"),
        zdot_gaps: squared_gaps(&sz_full),
        zdot_singular_values: sz_full,
        delta,
        pair_count: diff.len(),
        x_frobenius: x.norm(),
        xdot_frobenius: diff.xdot.norm(),
        x_spectral: svd_x.singular_values[0],
        xdot_spectral: crate::linalg::spectral_norm(&diff.xdot),
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > TIE_TOLERANCE {
            return x.total_cmp(y);
        }
    }
    std::cmp::Ordering::Equal
}

/// Extends `k < d` right singular vectors to a full orthonormal basis with
/// zero singular values, sign-normalized.
fn complete_right_basis(s: &[f64], v: &DMatrix<f64>, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let k = s.len();
    if k == d {
        return (s.to_vec(), v.clone());
    }
    let mut basis = DMatrix::zeros(d, d);
    basis.columns_mut(0, k).copy_from(v);
    let mut filled = k;
    for e in 0..d {
        if filled == d {
            break;
        }
        let mut cand = DVector::zeros(d);
        cand[e] = 1.0;
        for c in 0..filled {
            let col = basis.column(c).into_owned();
            cand -= &col * col.dot(&cand);
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            cand /= norm;
            cand *= sign_of_dominant(cand.as_slice());
            basis.set_column(filled, &cand);
            filled += 1;
        }
    }
    let mut full = s.to_vec();
    full.resize(d, 0.0);
    (full, basis)
}

/// Slowness: mean of `(y_s − y_t)²` over the recorded pairs. For a time
/// series the pairs are consecutive samples, giving the time average of the
/// squared finite difference.
pub fn delta_value(y: &[f64], pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|&(s, t)| (y[s] - y[t]).powi(2)).sum::<f64>() / pairs.len() as f64
}

impl SfaResult {
    /// `Z = X B^{-1/2}`.
    pub fn whiten(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.b_inv_half
    }

    /// `Ż = Ẋ B^{-1/2}`.
    pub fn whitened_differences(&self, diff: &DiffMatrix) -> DMatrix<f64> {
        &diff.xdot * &self.b_inv_half
    }

    /// Output scaled by `√n`, so each column has unit variance in the `1/n`
    /// convention.
    pub fn unit_variance_output(&self) -> DMatrix<f64> {
        &self.y * (self.y.nrows() as f64).sqrt()
    }

    /// Slowness of every direction of `Ż`, slowest first: `σ_j² / #pairs`.
    pub fn slowness_spectrum(&self) -> Vec<f64> {
        let c = self.pair_count as f64;
        self.zdot_singular_values.iter().rev().map(|s| s * s / c).collect()
    }
}

/// Constraint residuals of an output matrix under the `1/n` convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub max_abs_mean: f64,
    pub max_variance_error: f64,
    pub max_cross_correlation: f64,
}

impl ConstraintCheck {
    pub fn of(y_unit: &DMatrix<f64>) -> ConstraintCheck {
        let n = y_unit.nrows() as f64;
        let means: Vec<f64> = y_unit.column_iter().map(|c| c.sum() / n).collect();
        let cov = y_unit.transpose() * y_unit / n;
        let mut var_err: f64 = 0.0;
        let mut cross: f64 = 0.0;
        for a in 0..cov.nrows() {
            for b in 0..cov.ncols() {
                if a == b {
                    var_err = var_err.max((cov[(a, a)] - 1.0).abs());
                } else {
                    cross = cross.max(cov[(a, b)].abs());
                }
            }
        }
        ConstraintCheck {
            max_abs_mean: means.iter().fold(0.0, |m, v| m.max(v.abs())),
            max_variance_error: var_err,
            max_cross_correlation: cross,
        }
    }

    pub fn holds(&self, mean_tol: f64, var_tol: f64, corr_tol: f64) -> bool {
        self.max_abs_mean <= mean_tol && self.max_variance_error <= var_tol && self.max_cross_correlation <= corr_tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfa_exact::dataset::{Mode, DiffMatrix};

    #[test]
    fn decoupled_coordinates_come_out_in_scale_order() {
        // X with orthonormal columns; Ẋ rows scale each coordinate differently.
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let xdot = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let diff = DiffMatrix { xdot, pairs: vec![(0, 1), (0, 2), (1, 2)], mode: Mode::Classification };
        let res = exact_sfa(&x, &diff, 3).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((res.w - expect).norm() < 1e-12);
        assert_eq!(res.gamma, 1.0);
    }

    #[test]
    fn rank_deficient_input() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let diff = DiffMatrix { xdot: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), pairs: vec![(0, 1)], mode: Mode::Classification };
        assert!(matches!(exact_sfa(&x, &diff, 1), Err(SfaError::RankDeficient { .. })));
        let res = exact_sfa_with(&x, &diff, 1, ExactOptions { pseudo_inverse: true }).unwrap();
        assert_eq!(res.w.ncols(), 1);
    }

    #[test]
    fn j_out_of_range() {
        let x = DMatrix::<f64>::identity(2, 2);
        let diff = DiffMatrix { xdot: DMatrix::identity(1, 2), pairs: vec![(0, 1)], mode: Mode::Classification };
        assert!(matches!(exact_sfa(&x, &diff, 3), Err(SfaError::InvalidInput(_))));
        assert!(matches!(exact_sfa(&x, &diff, 0), Err(SfaError::InvalidInput(_))));
    }

    #[test]
    fn delta_of_constant_signal_is_zero() {
        assert_eq!(delta_value(&[2.0; 4], &[(1, 0), (2, 1), (3, 2)]), 0.0);
    }

    #[test]
    fn complete_basis_is_orthonormal() {
        let v = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let (s, basis) = complete_right_basis(&[2.0], &v, 3);
        assert_eq!(s, vec![2.0, 0.0, 0.0]);
        assert!((basis.transpose() * &basis - DMatrix::identity(3, 3)).norm() < 1e-12);
    }
}
