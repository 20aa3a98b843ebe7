//! Dense helpers shared by the exact solver, the sketches and the harness.

use nalgebra::{DMatrix, DVector};

/// Thin SVD with singular values sorted descending and each right singular
/// vector sign-normalized (largest-magnitude coordinate positive). Left
/// vectors are flipped together with their right partners.
pub struct SortedSvd {
    pub u: Option<DMatrix<f64>>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn sorted_svd(a: &DMatrix<f64>, compute_u: bool) -> SortedSvd {
    let svd = a.clone().svd(compute_u, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut v = DMatrix::zeros(a.ncols(), k);
    let mut s = DVector::zeros(k);
    let mut u = svd.u.as_ref().map(|_| DMatrix::zeros(a.nrows(), k));
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = svd.singular_values[src];
        let mut col = v_t.row(src).transpose();
        let sign = sign_of_dominant(col.as_slice());
        col *= sign;
        v.set_column(dst, &col);
        if let (Some(u_out), Some(u_in)) = (u.as_mut(), svd.u.as_ref()) {
            u_out.set_column(dst, &(u_in.column(src) * sign));
        }
    }
    SortedSvd {
        u,
        singular_values: s,
        v,
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and
/// sign-normalized eigenvectors.
pub fn sorted_symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        col *= sign_of_dominant(col.as_slice());
        vecs.set_column(dst, &col);
    }
    (vals, vecs)
}

/// +1 or -1 so that the largest-magnitude coordinate becomes positive.
/// Ties go to the first coordinate reaching the maximum.
pub fn sign_of_dominant(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

pub fn sign_normalize_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let s = sign_of_dominant(col.as_slice());
        col *= s;
    }
}

/// Spectral norm via the largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `‖UᵀU − I‖` in spectral norm.
pub fn isometry_error(u: &DMatrix<f64>) -> f64 {
    let gram = u.transpose() * u;
    let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
    spectral_norm(&(gram - eye))
}

/// Column matching between a reference basis and an estimate.
///
/// Greedily pairs columns by maximal absolute inner product, then flips each
/// matched estimate column to agree in sign with its reference.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// `assignment[j]` is the estimate column matched to reference column `j`.
    pub assignment: Vec<usize>,
    pub signs: Vec<f64>,
}

impl Alignment {
    pub fn greedy(reference: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Alignment {
        let k = reference.ncols();
        let m = estimate.ncols();
        let overlap = reference.transpose() * estimate;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * m);
        for j in 0..k {
            for l in 0..m {
                pairs.push((overlap[(j, l)].abs(), j, l));
            }
        }
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut assignment = vec![usize::MAX; k];
        let mut used = vec![false; m];
        for (_, j, l) in pairs {
            if assignment[j] == usize::MAX && !used[l] {
                assignment[j] = l;
                used[l] = true;
            }
        }
        let signs = (0..k)
            .map(|j| match assignment[j] {
                usize::MAX => 1.0,
                l if overlap[(j, l)] < 0.0 => -1.0,
                _ => 1.0,
            })
            .collect();
        Alignment { assignment, signs }
    }

    /// Estimate columns reordered and sign-fixed to line up with the reference.
    /// Unmatched reference columns get a zero column.
    pub fn apply(&self, estimate: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(estimate.nrows(), self.assignment.len());
        for (j, &l) in self.assignment.iter().enumerate() {
            if l != usize::MAX {
                out.set_column(j, &(estimate.column(l) * self.signs[j]));
            }
        }
        out
    }
}

/// `‖reference − aligned(estimate)‖_F`.
pub fn aligned_distance(reference: &DMatrix<f64>, estimate: &DMatrix<f64>) -> f64 {
    let aligned = Alignment::greedy(reference, estimate).apply(estimate);
    (reference - aligned).norm()
}

/// Row-major nested-vector serde representation for dense matrices.
pub mod mat_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m
            .row_iter()
            .map(|r| r.iter().cloned().collect())
            .collect();
        Shape {
            nrows: m.nrows(),
            ncols: m.ncols(),
            rows,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let shape = Shape::deserialize(d)?;
        if shape.rows.len() != shape.nrows || shape.rows.iter().any(|r| r.len() != shape.ncols) {
            return Err(serde::de::Error::custom("matrix shape does not match its rows"));
        }
        Ok(DMatrix::from_fn(shape.nrows, shape.ncols, |i, j| shape.rows[i][j]))
    }

    #[derive(Serialize, Deserialize)]
    struct Shape {
        nrows: usize,
        ncols: usize,
        rows: Vec<Vec<f64>>,
    }
}
