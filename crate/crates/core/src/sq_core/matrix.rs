use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use super::ledger::CostLedger;
use super::tree::{read_f64s, read_u64, WeightTree};
use crate::error::{Result, SfaError};

const MAGIC: &[u8; 4] = b"SQM1";

/// Row-wise sampling structure for an `n × d` matrix.
///
/// One [`WeightTree`] per row plus a tree over the row norms, so that
/// `D_Ã` (rows by squared norm) and `D_{A(i,·)}` are both available by tree
/// descent, and `‖A‖_F²` is a root read. All trees share one ledger.
#[derive(Debug, Clone)]
pub struct MatrixSQ {
    ncols: usize,
    rows: Vec<WeightTree>,
    row_norms: WeightTree,
    ledger: Arc<CostLedger>,
}

impl MatrixSQ {
    pub fn build(a: &DMatrix<f64>, ledger: Arc<CostLedger>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(SfaError::InvalidInput(format!("matrix must be non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        let rows: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().cloned().collect()).collect();
        Self::from_rows(&rows, ledger)
    }

    pub fn from_rows(rows: &[Vec<f64>], ledger: Arc<CostLedger>) -> Result<Self> {
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || ncols == 0 {
            return Err(SfaError::InvalidInput("matrix must have at least one row and column".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
            return Err(SfaError::InvalidInput(format!("row {i} has length {} (expected {ncols})", rows[i].len())));
        }
        let trees = rows
            .iter()
            .map(|r| WeightTree::build(r, Arc::clone(&ledger)))
            .collect::<Result<Vec<_>>>()?;
        let norms: Vec<f64> = trees.iter().map(WeightTree::norm).collect();
        // Row norms come from the row roots, not from re-reading entries.
        let mut row_norms = WeightTree::build(&norms, CostLedger::shared())?;
        row_norms.set_ledger(Arc::clone(&ledger));
        Ok(MatrixSQ { ncols, rows: trees, row_norms, ledger })
    }

    /// Structure over `Aᵀ`: rows of the result are the columns of `a`.
    pub fn build_transposed(a: &DMatrix<f64>, ledger: Arc<CostLedger>) -> Result<Self> {
        Self::build(&a.transpose(), ledger)
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn ledger(&self) -> &Arc<CostLedger> {
        &self.ledger
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].query(j)
    }

    pub fn try_entry(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.nrows() {
            return Err(SfaError::IndexError { index: i, len: self.nrows() });
        }
        self.rows[i].try_query(j)
    }

    /// Reads a whole row (`d` entry reads).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.ledger.read_entries(self.ncols as u64);
        self.rows[i].values().to_vec()
    }

    /// Reads a whole column (`n` entry reads).
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.ledger.read_entries(self.rows.len() as u64);
        self.rows.iter().map(|t| t.values()[j]).collect()
    }

    /// `‖A(i,·)‖²`.
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.rows[i].norm_sq()
    }

    /// `‖A‖_F²`.
    pub fn frobenius_sq(&self) -> f64 {
        self.row_norms.norm_sq()
    }

    pub fn row_tree(&self, i: usize) -> &WeightTree {
        &self.rows[i]
    }

    pub fn row_norm_tree(&self) -> &WeightTree {
        &self.row_norms
    }

    /// Row index from `D_Ã`.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        self.row_norms.sample(rng)
    }

    /// Column index from `D_{A(i,·)}`.
    pub fn sample_in_row<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        self.rows
            .get(i)
            .ok_or(SfaError::IndexError { index: i, len: self.rows.len() })?
            .sample(rng)
    }

    /// Entry `(i, j)` with probability `A(i,j)² / ‖A‖_F²` (row, then column).
    pub fn sample_entry<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize)> {
        let i = self.sample_row(rng)?;
        let j = self.rows[i].sample(rng)?;
        Ok((i, j))
    }

    pub fn update(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= self.rows.len() {
            return Err(SfaError::IndexError { index: i, len: self.rows.len() });
        }
        self.rows[i].update(j, value)?;
        let norm = self.rows[i].norm();
        self.row_norms.update(i, norm)
    }

    /// Dense copy charged as a full scan.
    pub fn read_dense(&self) -> DMatrix<f64> {
        self.ledger.read_entries((self.nrows() * self.ncols) as u64);
        self.to_dense()
    }

    /// Dense copy without touching the ledger (oracles and tests).
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols, |i, j| self.rows[i].values()[j])
    }

    pub fn check_invariants(&self, rel_tol: f64) -> std::result::Result<(), String> {
        self.row_norms.check_invariants(rel_tol)?;
        for (i, t) in self.rows.iter().enumerate() {
            t.check_invariants(rel_tol).map_err(|e| format!("row {i}: {e}"))?;
            let leaf = self.row_norms.values()[i].powi(2);
            let root = t.norm_sq();
            if (leaf - root).abs() > rel_tol * root.max(leaf).max(f64::MIN_POSITIVE) {
                return Err(format!("row-norm leaf {i} = {leaf}, row root = {root}"));
            }
        }
        Ok(())
    }

    /// Little-endian `SQM1` encoding: magic, u64 rows, u64 cols, row-major f64 payload.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.ncols as u64).to_le_bytes())?;
        for t in &self.rows {
            for v in t.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, ledger: Arc<CostLedger>) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SfaError::Format(format!("expected magic SQM1, found {magic:?}")));
        }
        let n = read_u64(&mut r)? as usize;
        let d = read_u64(&mut r)? as usize;
        let mut rows = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            rows.push(read_f64s(&mut r, d)?);
        }
        Self::from_rows(&rows, ledger)
    }
}
