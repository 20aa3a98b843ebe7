//! Row/column sampling approximate SVD (FKV).
//!
//! Rows of `A` are drawn by squared norm (or by any importance distribution
//! the [`RowSource`] exposes), rescaled to an unbiased sketch `S` with
//! `E[SᵀS] = AᵀA`, then columns of `S` are drawn the same way to give a small
//! matrix `W`. The left singular vectors of `W` lift back through `S` to
//! approximate right singular vectors of `A`:
//! `V̂(·,l) = Sᵀ u_l / σ_l`.
//!
//! Duplicate draws are merged: a row drawn `c` times enters once with weight
//! `√(c / (s·p))`, which leaves `SᵀS` unchanged.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfaError};
use crate::linalg::{isometry_error, mat_serde, sign_of_dominant, sorted_svd};
use crate::sq_core::{CostLedger, MatrixSQ, WeightTree};

/// Something whose rows can be drawn with known probability and read.
pub trait RowSource {
    fn nrows(&self) -> usize;

    fn ncols(&self) -> usize;

    /// `‖A‖_F²` when it is available without sampling.
    fn frobenius_sq(&self) -> Option<f64>;

    fn draw_row(&self, rng: &mut dyn rand::RngCore) -> Result<usize>;

    /// Row `i` together with the probability that `draw_row` returns `i`.
    fn read_row(&self, i: usize) -> (Vec<f64>, f64);
}

impl RowSource for MatrixSQ {
    fn nrows(&self) -> usize {
        MatrixSQ::nrows(self)
    }

    fn ncols(&self) -> usize {
        MatrixSQ::ncols(self)
    }

    fn frobenius_sq(&self) -> Option<f64> {
        Some(MatrixSQ::frobenius_sq(self))
    }

    fn draw_row(&self, rng: &mut dyn rand::RngCore) -> Result<usize> {
        self.sample_row(rng)
    }

    fn read_row(&self, i: usize) -> (Vec<f64>, f64) {
        let p = self.row_norm_sq(i) / MatrixSQ::frobenius_sq(self);
        (self.row(i), p)
    }
}

/// Row access to `A` through a structure stored over `Aᵀ`.
///
/// Drawing an entry of `Aᵀ` (row by squared norm, then entry within the row)
/// and keeping its column index yields row `i` of `A` with probability
/// `‖A(i,·)‖² / ‖A‖_F²`.
#[derive(Debug, Clone, Copy)]
pub struct Transposed<'a>(pub &'a MatrixSQ);

impl RowSource for Transposed<'_> {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }

    fn ncols(&self) -> usize {
        self.0.nrows()
    }

    fn frobenius_sq(&self) -> Option<f64> {
        Some(self.0.frobenius_sq())
    }

    fn draw_row(&self, rng: &mut dyn rand::RngCore) -> Result<usize> {
        Ok(self.0.sample_entry(rng)?.1)
    }

    fn read_row(&self, i: usize) -> (Vec<f64>, f64) {
        let row = self.0.column(i);
        let p = row.iter().map(|v| v * v).sum::<f64>() / self.0.frobenius_sq();
        (row, p)
    }
}

/// Sketch sizes and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkvConfig {
    /// `c` in `r' = max(16, ⌈c / (ε²η²)⌉ · (‖A‖_F / σ)²)`.
    pub oversampling: f64,
    /// Column draws as a multiple of row draws.
    pub column_factor: f64,
    /// Largest accepted number of row draws.
    pub max_rows: u64,
}

impl Default for FkvConfig {
    fn default() -> Self {
        FkvConfig { oversampling: 4.0, column_factor: 1.0, max_rows: 50_000_000 }
    }
}

impl FkvConfig {
    /// Row draws for the accuracy pair `(eps, eta)` at threshold `sigma`.
    pub fn rows_for(&self, frobenius_sq: f64, sigma: f64, eps: f64, eta: f64) -> Result<u64> {
        check_unit("eps", eps)?;
        check_unit("eta", eta)?;
        let base = (self.oversampling / (eps * eps * eta * eta)).ceil();
        let rows = (base * frobenius_sq / (sigma * sigma)).ceil().max(16.0);
        self.within_budget(rows)
    }

    pub fn within_budget(&self, rows: f64) -> Result<u64> {
        if !rows.is_finite() || rows > self.max_rows as f64 {
            return Err(SfaError::BudgetExceeded { what: "FKV row sketch", required: rows, budget: self.max_rows as f64 });
        }
        Ok(rows as u64)
    }

    pub fn columns_for(&self, rows: u64) -> u64 {
        ((rows as f64 * self.column_factor).ceil() as u64).max(1)
    }

    /// Draws for the configured accuracy, then the sketch.
    pub fn run<S, R>(&self, a: &S, sigma_threshold: f64, eps: f64, eta: f64, rng: &mut R) -> Result<ApproxSVD>
    where
        S: RowSource + ?Sized,
        R: Rng + ?Sized,
    {
        check_threshold(sigma_threshold)?;
        let frob = match a.frobenius_sq() {
            Some(f) => f,
            None => return Err(SfaError::InvalidInput("sized FKV needs a known Frobenius norm".into())),
        };
        if sigma_threshold * sigma_threshold > frob {
            return Err(SfaError::EmptySpectrum { threshold: sigma_threshold, norm: frob.sqrt() });
        }
        let rows = self.rows_for(frob, sigma_threshold, eps, eta)?;
        let mut svd = sketch(a, sigma_threshold, eta, rows, self.columns_for(rows), rng)?;
        svd.eps = eps;
        Ok(svd)
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(SfaError::InvalidInput(format!("{name} must lie in (0, 1), got {x}")))
    }
}

fn check_threshold(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(SfaError::InvalidInput(format!("singular value threshold must be positive, got {sigma}")))
    }
}

/// Approximate SVD with the default sizing rule.
pub fn fkv_approx_svd<S, R>(a: &S, sigma_threshold: f64, eps: f64, eta: f64, rng: &mut R) -> Result<ApproxSVD>
where
    S: RowSource + ?Sized,
    R: Rng + ?Sized,
{
    FkvConfig::default().run(a, sigma_threshold, eps, eta, rng)
}

/// Succinct approximate right singular structure of `A`.
///
/// `V̂ = A_Rᵀ · coeff` where `A_R` stacks the sampled rows `row_indices`.
/// `v_hat` is that product materialized (it is only `d × r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxSVD {
    pub rank: usize,
    pub row_indices: Vec<usize>,
    #[serde(with = "mat_serde")]
    pub coeff: DMatrix<f64>,
    pub sigma_hat: Vec<f64>,
    #[serde(with = "mat_serde")]
    pub v_hat: DMatrix<f64>,
    pub sigma_threshold: f64,
    pub eps: f64,
    pub eta: f64,
    pub rows_drawn: u64,
    pub cols_drawn: u64,
    /// `‖S‖_F²`, an unbiased estimate of `‖A‖_F²`.
    pub frobenius_sq_estimate: f64,
    /// Sketch singular values below the retention cut, largest first.
    pub discarded: Vec<f64>,
}

impl ApproxSVD {
    pub fn ncols(&self) -> usize {
        self.v_hat.nrows()
    }

    /// `‖V̂ᵀV̂ − I‖`, measured.
    pub fn isometry_error(&self) -> f64 {
        isometry_error(&self.v_hat)
    }

    /// The isometry level the sizing rule is meant to deliver.
    pub fn advertised_isometry(&self) -> f64 {
        self.eta * self.eps * self.eps
    }

    /// `Û(i,·) = A(i,·) V̂ Σ̂⁻¹` from a row of `A`.
    pub fn left_row(&self, a_row: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(a_row);
        let proj = self.v_hat.tr_mul(&x);
        proj.iter().zip(&self.sigma_hat).map(|(p, s)| p / s).collect()
    }

    /// `Σ̂⁻¹` in a sampling tree.
    pub fn sigma_inv_tree(&self) -> Result<WeightTree> {
        let inv: Vec<f64> = self.sigma_hat.iter().map(|s| 1.0 / s).collect();
        WeightTree::build(&inv, CostLedger::shared())
    }

    /// `V̂ᵀ` (`r × d`) in a sampling structure, ready for matrix-vector products.
    pub fn v_hat_t_sq(&self) -> Result<MatrixSQ> {
        MatrixSQ::build(&self.v_hat.transpose(), CostLedger::shared())
    }

    /// `V̂ Σ̂^{power} V̂ᵀ`.
    pub fn spectral_function(&self, power: f64) -> DMatrix<f64> {
        let mut scaled = self.v_hat.clone();
        for (l, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.sigma_hat[l].powf(power);
        }
        scaled * self.v_hat.transpose()
    }
}

/// Distinct sampled rows of `A` with their merge weights `√(count/(s·p))`.
#[derive(Debug, Clone)]
pub struct RowSketch {
    pub row_indices: Vec<usize>,
    /// Unscaled rows, one per distinct index.
    pub raw: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl RowSketch {
    /// `S` with `E[SᵀS] = AᵀA`.
    pub fn scaled(&self) -> DMatrix<f64> {
        let mut s = self.raw.clone();
        for (k, mut r) in s.row_iter_mut().enumerate() {
            r *= self.weights[k];
        }
        s
    }
}

/// Draws `rows` rows and reads each distinct one once.
pub fn row_sketch<S, R>(a: &S, rows: u64, rng: &mut R) -> Result<RowSketch>
where
    S: RowSource + ?Sized,
    R: Rng + ?Sized,
{
    if rows == 0 {
        return Err(SfaError::InvalidInput("sketch sizes must be positive".into()));
    }
    let mut rng = RngAdapter(rng);
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..rows {
        *counts.entry(a.draw_row(&mut rng)?).or_default() += 1;
    }
    let row_indices: Vec<usize> = counts.keys().copied().collect();
    let mut raw = DMatrix::zeros(row_indices.len(), a.ncols());
    let mut weights = Vec::with_capacity(row_indices.len());
    for (k, (&i, &c)) in counts.iter().enumerate() {
        let (row, p) = a.read_row(i);
        if p <= 0.0 {
            return Err(SfaError::InvalidInput(format!("row {i} was drawn with zero probability")));
        }
        weights.push((c as f64 / (rows as f64 * p)).sqrt());
        for (j, v) in row.into_iter().enumerate() {
            raw[(k, j)] = v;
        }
    }
    Ok(RowSketch { row_indices, raw, weights })
}

/// Sketch with explicit draw counts.
///
/// Keeps singular values `σ̂ ≥ (1 − η)·σ_threshold`.
pub fn sketch<S, R>(a: &S, sigma_threshold: f64, eta: f64, rows: u64, cols: u64, rng: &mut R) -> Result<ApproxSVD>
where
    S: RowSource + ?Sized,
    R: Rng + ?Sized,
{
    check_threshold(sigma_threshold)?;
    if !(0.0..1.0).contains(&eta) {
        return Err(SfaError::InvalidInput(format!("eta must lie in [0, 1), got {eta}")));
    }
    if rows == 0 || cols == 0 {
        return Err(SfaError::InvalidInput("sketch sizes must be positive".into()));
    }
    let mut rng = RngAdapter(rng);
    let RowSketch { row_indices, raw, weights } = row_sketch(a, rows, &mut rng)?;
    let m = row_indices.len();
    let mut s = raw.clone();
    for (k, mut r) in s.row_iter_mut().enumerate() {
        r *= weights[k];
    }
    let frob_s = s.norm_squared();
    if frob_s <= 0.0 {
        return Err(SfaError::DegenerateDistribution);
    }
    if sigma_threshold * sigma_threshold > frob_s && a.frobenius_sq().is_none() {
        return Err(SfaError::EmptySpectrum { threshold: sigma_threshold, norm: frob_s.sqrt() });
    }

    // Column stage over the sketch.
    let col_norms: Vec<f64> = s.column_iter().map(|c| c.norm()).collect();
    let col_tree = WeightTree::build(&col_norms, CostLedger::shared())?;
    let mut col_counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..cols {
        *col_counts.entry(col_tree.sample(&mut rng)?).or_default() += 1;
    }
    let mut w = DMatrix::zeros(m, col_counts.len());
    for (k, (&j, &c)) in col_counts.iter().enumerate() {
        let q = col_norms[j] * col_norms[j] / frob_s;
        w.set_column(k, &(s.column(j) * (c as f64 / (cols as f64 * q)).sqrt()));
    }

    let svd = sorted_svd(&w, true);
    let u = svd.u.expect("left vectors requested");
    let cut = (1.0 - eta) * sigma_threshold;
    let rank = svd.singular_values.iter().take_while(|&&x| x >= cut && x > 0.0).count();
    let discarded: Vec<f64> = svd.singular_values.iter().skip(rank).copied().collect();
    if rank == 0 {
        return Err(SfaError::EmptySpectrum { threshold: sigma_threshold, norm: frob_s.sqrt() });
    }
    let sigma_hat: Vec<f64> = svd.singular_values.iter().take(rank).copied().collect();

    let mut coeff = DMatrix::zeros(m, rank);
    for l in 0..rank {
        for k in 0..m {
            coeff[(k, l)] = weights[k] * u[(k, l)] / sigma_hat[l];
        }
    }
    let mut v_hat = raw.tr_mul(&coeff);
    for l in 0..rank {
        let sign = sign_of_dominant(v_hat.column(l).as_slice());
        if sign < 0.0 {
            v_hat.column_mut(l).neg_mut();
            coeff.column_mut(l).neg_mut();
        }
    }

    Ok(ApproxSVD {
        rank,
        row_indices,
        coeff,
        sigma_hat,
        v_hat,
        sigma_threshold,
        eps: f64::NAN,
        eta,
        rows_drawn: rows,
        cols_drawn: cols,
        frobenius_sq_estimate: frob_s,
        discarded,
    })
}

/// Lets a generic `Rng + ?Sized` stand in where `&mut dyn RngCore` is needed.
struct RngAdapter<'a, R: ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> rand::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sorted_svd;
    use crate::rng;

    fn sq(a: &DMatrix<f64>) -> MatrixSQ {
        MatrixSQ::build(a, CostLedger::shared()).unwrap()
    }

    #[test]
    fn rank_one_recovers_direction() {
        let u = DVector::from_fn(6, |i, _| (i as f64 + 1.0).sin());
        let v = DVector::from_fn(4, |i, _| (i as f64 + 0.5).cos());
        let a = (&u / u.norm()) * (&v / v.norm()).transpose();
        let m = sq(&a);
        let mut r = rng::stream(3, 0);
        let svd = fkv_approx_svd(&m, 0.5, 0.2, 0.5, &mut r).unwrap();
        assert_eq!(svd.rank, 1);
        let overlap = svd.v_hat.column(0).dot(&(&v / v.norm())).abs();
        assert!(overlap >= 0.99, "overlap {overlap}");
    }

    #[test]
    fn padded_diagonal_keeps_two_values() {
        let mut a = DMatrix::zeros(8, 8);
        a[(0, 0)] = 4.0;
        a[(1, 1)] = 2.0;
        a[(2, 2)] = 1e-3;
        let m = sq(&a);
        let frob = a.norm();
        let (eps, eta) = (0.1, 0.2);
        let mut r = rng::stream(5, 0);
        let svd = fkv_approx_svd(&m, 1.0, eps, eta, &mut r).unwrap();
        assert_eq!(svd.rank, 2);
        let exact = sorted_svd(&a, false).singular_values;
        for i in 0..2 {
            assert!((svd.sigma_hat[i] - exact[i]).abs() <= eta / 10.0 * frob);
        }
    }

    #[test]
    fn transposed_source_matches_direct_distribution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let at = sq(&a.transpose());
        let src = Transposed(&at);
        assert_eq!(src.nrows(), 3);
        let (row, p) = src.read_row(1);
        assert_eq!(row, vec![0.0, 2.0]);
        assert!((p - 4.0 / 7.0).abs() < 1e-12);
        let mut r = rng::stream(1, 0);
        let mut hits = [0u32; 3];
        for _ in 0..70_000 {
            hits[src.draw_row(&mut r).unwrap()] += 1;
        }
        assert!((hits[1] as f64 / 70_000.0 - 4.0 / 7.0).abs() < 0.01);
    }

    #[test]
    fn threshold_above_norm_is_empty() {
        let m = sq(&DMatrix::identity(3, 3));
        let mut r = rng::stream(0, 0);
        let err = fkv_approx_svd(&m, 2.0, 0.1, 0.1, &mut r).unwrap_err();
        assert!(matches!(err, SfaError::EmptySpectrum { .. }));
    }

    #[test]
    fn oversized_sketch_is_rejected() {
        let m = sq(&DMatrix::identity(3, 3));
        let cfg = FkvConfig { max_rows: 1000, ..FkvConfig::default() };
        let mut r = rng::stream(0, 0);
        let err = cfg.run(&m, 0.5, 0.01, 0.01, &mut r).unwrap_err();
        assert!(matches!(err, SfaError::BudgetExceeded { .. }));
    }

    #[test]
    fn left_row_and_spectral_function() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let m = sq(&a);
        let mut r = rng::stream(2, 0);
        let svd = sketch(&m, 0.5, 0.0, 20_000, 20_000, &mut r).unwrap();
        assert_eq!(svd.rank, 2);
        let inv_root = svd.spectral_function(-1.0);
        let ata = a.transpose() * &a;
        let approx_eye = &inv_root * &ata * &inv_root;
        assert!((approx_eye - DMatrix::identity(2, 2)).norm() < 0.1);
        let u0 = svd.left_row(&[3.0, 0.0]);
        assert!((u0[0].abs() - 1.0).abs() < 0.05);
    }
}
