//! Monte Carlo matrix multiplication over the inner index.
//!
//! Inner indices `ℓ` are drawn from `p_ℓ = ‖A(·,ℓ)‖² / ‖A‖_F²` and
//! `AB ≈ (1/t) Σ A(·,ℓ)B(ℓ,·) / p_ℓ`. Since `E‖AB − est‖_F² ≤ ‖A‖_F²‖B‖_F²/t`,
//! `t = ⌈‖A‖_F²‖B‖_F² / (δε²)⌉` gives `‖AB − est‖_F ≤ ε` with probability at
//! least `1 − δ`.
//!
//! The estimate is kept as `U·D·V` with `U = A(·, L)` left implicit (queried
//! through the structure over `Aᵀ`), `D` diagonal and `V = B(L, ·)` stored,
//! where `L` holds the distinct drawn indices.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matvec::MatVec;
use crate::error::{Result, SfaError};
use crate::linalg::mat_serde;
use crate::sq_core::{CostLedger, MatrixSQ};

pub const DEFAULT_MAX_DRAWS: u64 = 100_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccinctProduct {
    /// Rows of `A` (and of `U`).
    pub nrows: usize,
    /// Distinct inner indices, ascending.
    pub indices: Vec<usize>,
    /// `count_ℓ / (t·p_ℓ)` for each index.
    pub diag: Vec<f64>,
    /// `B(L, ·)`.
    #[serde(with = "mat_serde")]
    pub right: DMatrix<f64>,
    pub t: u64,
    pub eps: f64,
    pub delta: f64,
    #[serde(skip)]
    right_sq: OnceLock<MatrixSQ>,
}

impl PartialEq for SuccinctProduct {
    fn eq(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.indices == other.indices
            && self.diag == other.diag
            && self.right == other.right
            && self.t == other.t
            && self.eps.to_bits() == other.eps.to_bits()
            && self.delta.to_bits() == other.delta.to_bits()
    }
}

/// Draws needed for absolute error `eps` with failure probability `delta`.
pub fn required_draws(a_frob_sq: f64, b_frob_sq: f64, eps: f64, delta: f64) -> f64 {
    (a_frob_sq * b_frob_sq / (delta * eps * eps)).ceil().max(1.0)
}

/// `AB` to Frobenius error `eps` (absolute) with probability `1 − delta`.
///
/// `a_t` is the structure over `Aᵀ` (rows are columns of `A`), `b` over `B`.
pub fn approx_matmul<R: Rng + ?Sized>(
    a_t: &MatrixSQ,
    b: &MatrixSQ,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<SuccinctProduct> {
    approx_matmul_budgeted(a_t, b, eps, delta, DEFAULT_MAX_DRAWS, rng)
}

/// Relative mode: `eps_rel` is scaled by `‖A‖_F‖B‖_F`.
pub fn approx_matmul_relative<R: Rng + ?Sized>(
    a_t: &MatrixSQ,
    b: &MatrixSQ,
    eps_rel: f64,
    delta: f64,
    rng: &mut R,
) -> Result<SuccinctProduct> {
    let scale = (a_t.frobenius_sq() * b.frobenius_sq()).sqrt();
    approx_matmul(a_t, b, eps_rel * scale, delta, rng)
}

pub fn approx_matmul_budgeted<R: Rng + ?Sized>(
    a_t: &MatrixSQ,
    b: &MatrixSQ,
    eps: f64,
    delta: f64,
    max_draws: u64,
    rng: &mut R,
) -> Result<SuccinctProduct> {
    if a_t.nrows() != b.nrows() {
        return Err(SfaError::InvalidInput(format!(
            "inner dimensions differ: A has {} columns, B has {} rows",
            a_t.nrows(),
            b.nrows()
        )));
    }
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(SfaError::InvalidInput(format!("need eps > 0 and delta in (0,1), got {eps}, {delta}")));
    }
    let t = required_draws(a_t.frobenius_sq(), b.frobenius_sq(), eps, delta);
    if t > max_draws as f64 {
        return Err(SfaError::BudgetExceeded { what: "matrix product sketch", required: t, budget: max_draws as f64 });
    }
    let t = t as u64;
    sample_product(a_t, b, t, eps, delta, rng)
}

/// Product sketch with an explicit draw count.
pub fn sample_product<R: Rng + ?Sized>(
    a_t: &MatrixSQ,
    b: &MatrixSQ,
    t: u64,
    eps: f64,
    delta: f64,
    rng: &mut R,
) -> Result<SuccinctProduct> {
    if a_t.nrows() != b.nrows() {
        return Err(SfaError::InvalidInput("inner dimensions differ".into()));
    }
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..t {
        *counts.entry(a_t.sample_row(rng)?).or_default() += 1;
    }
    let frob_a = a_t.frobenius_sq();
    let mut indices = Vec::with_capacity(counts.len());
    let mut diag = Vec::with_capacity(counts.len());
    let mut right = DMatrix::zeros(counts.len(), b.ncols());
    for (k, (&l, &c)) in counts.iter().enumerate() {
        let p = a_t.row_norm_sq(l) / frob_a;
        indices.push(l);
        diag.push(c as f64 / (t as f64 * p));
        for (j, v) in b.row(l).into_iter().enumerate() {
            right[(k, j)] = v;
        }
    }
    Ok(SuccinctProduct {
        nrows: a_t.ncols(),
        indices,
        diag,
        right,
        t,
        eps,
        delta,
        right_sq: OnceLock::new(),
    })
}

impl SuccinctProduct {
    pub fn ncols(&self) -> usize {
        self.right.ncols()
    }

    /// `(UDV)(i, j)`.
    pub fn entry(&self, a_t: &MatrixSQ, i: usize, j: usize) -> f64 {
        self.indices
            .iter()
            .enumerate()
            .map(|(k, &l)| self.diag[k] * a_t.entry(l, i) * self.right[(k, j)])
            .sum()
    }

    /// Weights of row `i` over the stored right factor: `D_ℓ · A(i, ℓ)`.
    pub fn row_weights(&self, a_t: &MatrixSQ, i: usize) -> Vec<f64> {
        self.indices.iter().enumerate().map(|(k, &l)| self.diag[k] * a_t.entry(l, i)).collect()
    }

    /// Row `i` from a row of `A` that is already at hand.
    pub fn row_from(&self, a_row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols()];
        for (k, &l) in self.indices.iter().enumerate() {
            let w = self.diag[k] * a_row[l];
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * self.right[(k, j)];
            }
        }
        out
    }

    /// `D · B(L,·)` scattered into an `m × p` matrix (zero rows off `L`), so
    /// that row `i` of the product is `A(i,·) · folded()`.
    pub fn folded(&self, inner: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(inner, self.ncols());
        for (k, &l) in self.indices.iter().enumerate() {
            m.set_row(l, &(self.right.row(k) * self.diag[k]));
        }
        m
    }

    /// Sample/query access to row `i`.
    pub fn row_handle(&self, a_t: &MatrixSQ, i: usize) -> Result<MatVec<'_>> {
        let right = match self.right_sq.get() {
            Some(r) => r,
            None => {
                let built = MatrixSQ::build(&self.right, CostLedger::shared())?;
                self.right_sq.get_or_init(|| built)
            }
        };
        MatVec::new(right, self.row_weights(a_t, i))
    }

    /// Every entry, densified without charging the ledger.
    pub fn to_dense(&self, a_t: &MatrixSQ) -> DMatrix<f64> {
        let a = a_t.to_dense();
        let mut out = DMatrix::zeros(self.nrows, self.ncols());
        for (k, &l) in self.indices.iter().enumerate() {
            let col = a.row(l).transpose() * self.diag[k];
            out += col * self.right.row(k);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sq_core::{Query, SampleQuery};

    fn sq(a: &DMatrix<f64>) -> MatrixSQ {
        MatrixSQ::build(a, CostLedger::shared()).unwrap()
    }

    #[test]
    fn single_support_column_is_exact() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = 1.0;
        let b = DMatrix::<f64>::identity(2, 2);
        let (a_t, bs) = (sq(&a.transpose()), sq(&b));
        let mut r = rng::stream(0, 0);
        let p = sample_product(&a_t, &bs, 1, 1.0, 0.1, &mut r).unwrap();
        assert_eq!(p.to_dense(&a_t), &a * &b);
        assert_eq!(p.entry(&a_t, 0, 0), 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a_t = sq(&DMatrix::identity(3, 2));
        let b = sq(&DMatrix::identity(2, 2));
        let mut r = rng::stream(0, 0);
        assert!(matches!(approx_matmul(&a_t, &b, 0.1, 0.1, &mut r), Err(SfaError::InvalidInput(_))));
    }

    #[test]
    fn row_paths_agree() {
        let a = DMatrix::from_fn(6, 4, |i, j| ((i + 2 * j) as f64).sin());
        let b = DMatrix::from_fn(4, 3, |i, j| ((3 * i + j) as f64).cos());
        let (a_t, bs) = (sq(&a.transpose()), sq(&b));
        let mut r = rng::stream(9, 0);
        let p = sample_product(&a_t, &bs, 50, 1.0, 0.1, &mut r).unwrap();
        let dense = p.to_dense(&a_t);
        let folded = &a * p.folded(4);
        for i in 0..6 {
            let row = p.row_from(&a.row(i).iter().cloned().collect::<Vec<_>>());
            let h = p.row_handle(&a_t, i).unwrap();
            for j in 0..3 {
                assert!((row[j] - dense[(i, j)]).abs() < 1e-12);
                assert!((folded[(i, j)] - dense[(i, j)]).abs() < 1e-12);
                assert!((h.query(j) - dense[(i, j)]).abs() < 1e-12);
                assert!((p.entry(&a_t, i, j) - dense[(i, j)]).abs() < 1e-12);
            }
            assert!(h.dim() == 3 && h.kind() == crate::sq_core::HandleKind::Composed);
        }
    }

    #[test]
    fn serde_roundtrip_drops_cache_only() {
        let a = DMatrix::from_fn(3, 3, |i, j| (i + j) as f64 + 1.0);
        let (a_t, bs) = (sq(&a.transpose()), sq(&a));
        let mut r = rng::stream(2, 0);
        let p = sample_product(&a_t, &bs, 20, 1.0, 0.1, &mut r).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: SuccinctProduct = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }
}
