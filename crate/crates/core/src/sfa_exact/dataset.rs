use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfaError};

/// Default cap on the width produced by [`quadratic_expand`].
pub const DEFAULT_EXPANSION_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TimeSeries,
    Classification,
}

/// Samples in rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub mode: Mode,
    /// Columns removed by [`normalize`] for having zero variance, as indices
    /// into the matrix that was normalized.
    pub dropped_columns: Vec<usize>,
}

impl Dataset {
    pub fn time_series(x: DMatrix<f64>) -> Self {
        Dataset { x, labels: None, mode: Mode::TimeSeries, dropped_columns: Vec::new() }
    }

    pub fn classification(x: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.nrows() {
            return Err(SfaError::InvalidInput(format!("{} labels for {} rows", labels.len(), x.nrows())));
        }
        Ok(Dataset { x, labels: Some(labels), mode: Mode::Classification, dropped_columns: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Member indices of each class, ascending, classes ordered by id.
    pub fn classes(&self) -> Vec<(usize, Vec<usize>)> {
        let Some(labels) = &self.labels else { return Vec::new() };
        let mut map: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, &c) in labels.iter().enumerate() {
            map.entry(c).or_default().push(i);
        }
        map.into_iter().collect()
    }
}

/// Zero mean and unit (population) variance per column.
pub fn normalize(ds: &Dataset) -> Result<Dataset> {
    let n = ds.n();
    if n < 2 {
        return Err(SfaError::InvalidInput(format!("normalization needs at least 2 samples, got {n}")));
    }
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let mut stats = Vec::new();
    for (j, col) in ds.x.column_iter().enumerate() {
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var <= 1e-24 * (1.0 + mean * mean) {
            log::warn!("dropping constant column {j}");
            dropped.push(j);
        } else {
            keep.push(j);
            stats.push((mean, var.sqrt()));
        }
    }
    if keep.is_empty() {
        return Err(SfaError::InvalidInput("every column is constant".into()));
    }
    let x = DMatrix::from_fn(n, keep.len(), |i, k| {
        let (mean, sd) = stats[k];
        (ds.x[(i, keep[k])] - mean) / sd
    });
    Ok(Dataset { x, labels: ds.labels.clone(), mode: ds.mode, dropped_columns: dropped })
}

pub fn expanded_width(d: usize) -> usize {
    d + d * (d + 1) / 2
}

/// `[x₁..x_d, x₁x₁, x₁x₂, .., x₁x_d, x₂x₂, .., x_dx_d]`.
pub fn quadratic_expand(ds: &Dataset, cap: usize) -> Result<Dataset> {
    let d = ds.d();
    if d == 0 {
        return Err(SfaError::InvalidInput("cannot expand a dataset with no columns".into()));
    }
    let width = expanded_width(d);
    if width > cap {
        return Err(SfaError::BudgetExceeded { what: "quadratic expansion width", required: width as f64, budget: cap as f64 });
    }
    let mut x = DMatrix::zeros(ds.n(), width);
    for i in 0..ds.n() {
        let mut k = 0;
        for a in 0..d {
            x[(i, k)] = ds.x[(i, a)];
            k += 1;
        }
        for a in 0..d {
            for b in a..d {
                x[(i, k)] = ds.x[(i, a)] * ds.x[(i, b)];
                k += 1;
            }
        }
    }
    Ok(Dataset { x, labels: ds.labels.clone(), mode: ds.mode, dropped_columns: Vec::new() })
}

/// Rows are differences `X(s,·) − X(t,·)` for the recorded pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix {
    pub xdot: DMatrix<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub mode: Mode,
}

impl DiffMatrix {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Every row against `x`, to `tol`.
    pub fn verify_against(&self, x: &DMatrix<f64>, tol: f64) -> std::result::Result<(), String> {
        for (r, &(s, t)) in self.pairs.iter().enumerate() {
            for j in 0..x.ncols() {
                let want = x[(s, j)] - x[(t, j)];
                if (self.xdot[(r, j)] - want).abs() > tol {
                    return Err(format!("row {r} (pair {s},{t}) column {j}: {} != {want}", self.xdot[(r, j)]));
                }
            }
        }
        Ok(())
    }
}

/// Within-class pair differences (classification) or consecutive
/// differences `X(t+1) − X(t)` (time series, recorded as pair `(t+1, t)`).
///
/// A class with at most `max_pairs_per_class` pairs contributes all of them;
/// a larger class contributes that many distinct pairs drawn without
/// replacement. Pairs are listed in lexicographic order within each class.
pub fn pairwise_differentiate<R: Rng + ?Sized>(ds: &Dataset, max_pairs_per_class: usize, rng: &mut R) -> Result<DiffMatrix> {
    let pairs = match ds.mode {
        Mode::TimeSeries => {
            if ds.n() < 2 {
                return Err(SfaError::InvalidInput("a time series needs at least 2 samples".into()));
            }
            (0..ds.n() - 1).map(|t| (t + 1, t)).collect()
        }
        Mode::Classification => {
            let classes = ds.classes();
            if classes.is_empty() {
                return Err(SfaError::InvalidInput("classification mode needs labels".into()));
            }
            let mut pairs = Vec::new();
            for (class, members) in &classes {
                if members.len() < 2 {
                    return Err(SfaError::InvalidInput(format!("class {class} has a single member")));
                }
                class_pairs(members, max_pairs_per_class, rng, &mut pairs);
            }
            pairs
        }
    };
    Ok(DiffMatrix { xdot: difference_rows(&ds.x, &pairs), pairs, mode: ds.mode })
}

pub fn difference_rows(x: &DMatrix<f64>, pairs: &[(usize, usize)]) -> DMatrix<f64> {
    DMatrix::from_fn(pairs.len(), x.ncols(), |r, j| {
        let (s, t) = pairs[r];
        x[(s, j)] - x[(t, j)]
    })
}

fn class_pairs<R: Rng + ?Sized>(members: &[usize], max_pairs: usize, rng: &mut R, out: &mut Vec<(usize, usize)>) {
    let m = members.len();
    let total = m * (m - 1) / 2;
    if total <= max_pairs {
        for a in 0..m {
            for b in a + 1..m {
                out.push((members[a], members[b]));
            }
        }
        return;
    }
    let mut picks = rand::seq::index::sample(rng, total, max_pairs).into_vec();
    picks.sort_unstable();
    // Pair index p enumerates (a, b), a < b, row by row.
    let mut a = 0;
    let mut row_start = 0;
    for p in picks {
        while p >= row_start + (m - 1 - a) {
            row_start += m - 1 - a;
            a += 1;
        }
        let b = a + 1 + (p - row_start);
        out.push((members[a], members[b]));
    }
}
