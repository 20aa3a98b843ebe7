//! Seeded synthetic datasets.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfaError};
use crate::rng::{self, streams};
use crate::sfa_exact::Dataset;

/// Offsets of class means along successive coordinate axes; class 0 sits
/// at the origin and class `c ≥ 1` at `BLOB_OFFSETS[(c−1) % len] · e_{(c−1) % d}`.
pub const BLOB_OFFSETS: [f64; 8] = [12.0, 5.0, 9.0, 7.0, 4.0, 10.0, 6.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    /// Multiplies every class offset.
    pub separation: f64,
}

impl BlobSpec {
    pub fn new(n: usize, d: usize, classes: usize) -> Self {
        BlobSpec { n, d, classes, separation: 1.0 }
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        (0..self.classes)
            .map(|c| {
                let mut mu = vec![0.0; self.d];
                if c > 0 {
                    mu[(c - 1) % self.d] = self.separation * BLOB_OFFSETS[(c - 1) % BLOB_OFFSETS.len()];
                }
                mu
            })
            .collect()
    }
}

/// Gaussian classes with identity covariance; labels assigned round robin
/// so every prefix of the sample is balanced.
pub fn blobs(spec: &BlobSpec, seed: u64) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(SfaError::InvalidInput(format!("blobs need at least 2 classes, got {}", spec.classes)));
    }
    if spec.d == 0 || spec.n < 2 * spec.classes {
        return Err(SfaError::InvalidInput(format!(
            "need d >= 1 and at least two points per class (n = {}, K = {})",
            spec.n, spec.classes
        )));
    }
    let means = spec.means();
    let mut r = rng::stream(seed, streams::DATA);
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes).collect();
    let mut x = DMatrix::zeros(spec.n, spec.d);
    for i in 0..spec.n {
        for j in 0..spec.d {
            let z: f64 = r.sample(StandardNormal);
            x[(i, j)] = means[labels[i]][j] + z;
        }
    }
    Dataset::classification(x, labels)
}

/// `x₁ = sin t + cos²(11t)`, `x₂ = cos(11t)` on `t ∈ [0, 2π)`.
pub fn wiskott_signal(samples: usize) -> Result<Dataset> {
    if samples < 2 {
        return Err(SfaError::InvalidInput("the toy signal needs at least 2 samples".into()));
    }
    let x = DMatrix::from_fn(samples, 2, |i, j| {
        let t = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
        match j {
            0 => t.sin() + (11.0 * t).cos().powi(2),
            _ => (11.0 * t).cos(),
        }
    });
    Ok(Dataset::time_series(x))
}

/// The slow source of [`wiskott_signal`].
pub fn wiskott_source(samples: usize) -> Vec<f64> {
    (0..samples).map(|i| (2.0 * std::f64::consts::PI * i as f64 / samples as f64).sin()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRank {
    #[serde(skip)]
    pub a: DMatrix<f64>,
    /// Singular values of the noiseless part, descending.
    pub sigma: Vec<f64>,
    #[serde(skip)]
    pub v: DMatrix<f64>,
    pub noise: f64,
}

/// `U diag(σ) Vᵀ + noise · G` with random orthonormal `U`, `V` and
/// `σ_i² ∝ rank − i` (equal squared gaps), scaled so `σ_1 = scale`.
pub fn low_rank(n: usize, d: usize, rank: usize, noise: f64, scale: f64, seed: u64) -> Result<LowRank> {
    if rank == 0 || rank > d || rank > n {
        return Err(SfaError::InvalidInput(format!("rank must lie in 1..=min(n, d), got {rank}")));
    }
    let mut r = rng::stream(seed, streams::DATA);
    let mut gauss = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal));
    let orth = |m: DMatrix<f64>| m.svd(true, false).u.expect("left vectors requested");
    let u = orth(gauss(n, rank));
    let v = orth(gauss(d, rank));
    let g = gauss(n, d);
    let sigma: Vec<f64> = (0..rank).map(|i| scale * (((rank - i) as f64) / rank as f64).sqrt()).collect();
    let a = &u * DMatrix::from_diagonal(&DVector::from_vec(sigma.clone())) * v.transpose() + g * noise;
    let mut v = v;
    crate::linalg::sign_normalize_columns(&mut v);
    Ok(LowRank { a, sigma, v, noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let spec = BlobSpec::new(30, 4, 3);
        let a = blobs(&spec, 7).unwrap();
        let b = blobs(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, blobs(&spec, 8).unwrap());
        let counts = a.classes().iter().map(|(_, m)| m.len()).collect::<Vec<_>>();
        assert_eq!(counts, vec![10, 10, 10]);
    }

    #[test]
    fn blob_means_are_distinct() {
        let m = BlobSpec::new(10, 2, 3).means();
        assert_eq!(m, vec![vec![0.0, 0.0], vec![12.0, 0.0], vec![0.0, 5.0]]);
    }

    #[test]
    fn low_rank_spectrum_is_recorded() {
        let lr = low_rank(50, 10, 3, 0.0, 6.0, 1).unwrap();
        let s = crate::linalg::sorted_svd(&lr.a, false).singular_values;
        for i in 0..3 {
            assert!((s[i] - lr.sigma[i]).abs() < 1e-9, "{s:?} {:?}", lr.sigma);
        }
        assert!(s[3] < 1e-9);
    }

    #[test]
    fn toy_signal_shape() {
        let ds = wiskott_signal(100).unwrap();
        assert_eq!((ds.n(), ds.d()), (100, 2));
        assert!((ds.x[(0, 0)] - 1.0).abs() < 1e-12);
    }
}
