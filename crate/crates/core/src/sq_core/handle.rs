//! Sample-and-query access.
//!
//! [`Query`] is entry access; [`SampleQuery`] adds index sampling from
//! `D_x(i) = x(i)² / ‖x‖²` and a norm with a multiplicative error guarantee.
//! Stored vectors answer every request exactly; composed handles (see
//! [`crate::sketch_ops::MatVec`]) sample by rejection and estimate norms.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::matrix::MatrixSQ;
use super::tree::WeightTree;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandleKind {
    StoredVector,
    StoredMatrixRow,
    Composed,
}

/// Declared expected costs, in elementary operations, of one sample, one
/// query and one norm request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessCosts {
    pub sample: f64,
    pub query: f64,
    pub norm: f64,
}

pub trait Query {
    fn dim(&self) -> usize;

    fn query(&self, i: usize) -> f64;

    /// `‖x‖²`. The default reads every entry; cheap implementations override it.
    fn norm_sq(&self) -> f64 {
        (0..self.dim()).map(|i| self.query(i).powi(2)).sum()
    }
}

pub trait SampleQuery: Query {
    fn sample(&self, rng: &mut dyn RngCore) -> Result<usize>;

    /// `‖x‖` to multiplicative error `nu`. Exact for stored structures.
    fn norm_estimate(&self, nu: f64, rng: &mut dyn RngCore) -> Result<f64>;

    fn kind(&self) -> HandleKind;

    fn costs(&self) -> AccessCosts;
}

impl Query for WeightTree {
    fn dim(&self) -> usize {
        self.len()
    }

    fn query(&self, i: usize) -> f64 {
        WeightTree::query(self, i)
    }

    fn norm_sq(&self) -> f64 {
        WeightTree::norm_sq(self)
    }
}

impl SampleQuery for WeightTree {
    fn sample(&self, rng: &mut dyn RngCore) -> Result<usize> {
        WeightTree::sample(self, rng)
    }

    fn norm_estimate(&self, _nu: f64, _rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.norm())
    }

    fn kind(&self) -> HandleKind {
        HandleKind::StoredVector
    }

    fn costs(&self) -> AccessCosts {
        let log = self.depth() as f64;
        AccessCosts { sample: 2.0 * log + 1.0, query: 1.0, norm: 1.0 }
    }
}

/// Row `i` of a [`MatrixSQ`] viewed as a stored vector.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    matrix: &'a MatrixSQ,
    row: usize,
}

impl<'a> RowView<'a> {
    pub fn new(matrix: &'a MatrixSQ, row: usize) -> Self {
        assert!(row < matrix.nrows(), "row {row} out of range");
        RowView { matrix, row }
    }
}

impl Query for RowView<'_> {
    fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn query(&self, i: usize) -> f64 {
        self.matrix.entry(self.row, i)
    }

    fn norm_sq(&self) -> f64 {
        self.matrix.row_norm_sq(self.row)
    }
}

impl SampleQuery for RowView<'_> {
    fn sample(&self, rng: &mut dyn RngCore) -> Result<usize> {
        self.matrix.sample_in_row(self.row, rng)
    }

    fn norm_estimate(&self, _nu: f64, _rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.matrix.row_norm_sq(self.row).sqrt())
    }

    fn kind(&self) -> HandleKind {
        HandleKind::StoredMatrixRow
    }

    fn costs(&self) -> AccessCosts {
        self.matrix.row_tree(self.row).costs()
    }
}

/// Plain in-memory vector with query access only.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
    norm_sq: f64,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm_sq = values.iter().map(|v| v * v).sum();
        DenseVector { values, norm_sq }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(values: Vec<f64>) -> Self {
        DenseVector::new(values)
    }
}

impl Query for DenseVector {
    fn dim(&self) -> usize {
        self.values.len()
    }

    fn query(&self, i: usize) -> f64 {
        self.values[i]
    }

    fn norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sq_core::CostLedger;
    use nalgebra::DMatrix;

    #[test]
    fn stored_norm_is_exact() {
        let t = WeightTree::from_values(&[3.0, 4.0]).unwrap();
        let mut r = rng::stream(0, 0);
        assert_eq!(t.norm_estimate(0.5, &mut r).unwrap(), 5.0);
        assert_eq!(t.kind(), HandleKind::StoredVector);
    }

    #[test]
    fn row_view_delegates() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 4.0]);
        let m = MatrixSQ::build(&a, CostLedger::shared()).unwrap();
        let row = RowView::new(&m, 1);
        assert_eq!(row.dim(), 2);
        assert_eq!(row.query(1), 4.0);
        assert!((row.norm_sq() - 25.0).abs() < 1e-12);
        let mut r = rng::stream(0, 0);
        let h: &dyn SampleQuery = &row;
        assert!(h.sample(&mut r).unwrap() < 2);
    }
}
