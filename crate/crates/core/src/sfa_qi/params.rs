use serde::{Deserialize, Serialize};

use crate::error::{Result, SfaError};
use crate::sfa_exact::SfaResult;

/// Largest value an `ε` or `η` may take after selection.
pub const UNIT_CLAMP: f64 = 0.99;

/// Largest retention slack below a singular value threshold.
pub const MAX_RETENTION_SLACK: f64 = 0.5;

/// Matrix-product failure probabilities; with the two SVD steps at 1/10
/// each, the union bound leaves at least 2/3 overall.
pub const DEFAULT_DELTA: f64 = 1.0 / 15.0;

/// Spectral quantities that drive parameter selection and sketch sizing.
///
/// Unsubscripted norms are spectral norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub x_frobenius: f64,
    pub x_spectral: f64,
    pub xdot_frobenius: f64,
    pub xdot_spectral: f64,
    /// Smallest singular value of `X`.
    pub theta: f64,
    /// Smallest singular value of `Ż`.
    pub gamma: f64,
    pub zdot_spectral: f64,
    pub zdot_frobenius: f64,
    /// `σ_{J+1}² − σ_J²` of `Ż` counted from the smallest value.
    pub slow_gap: f64,
    /// Smallest relative squared gap of `X`, `min_i (σ_i² − σ_{i+1}²) / ‖X‖_F²`.
    pub x_gap_ratio: f64,
    pub d: usize,
    pub j: usize,
    pub source: SpectrumSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSource {
    Oracle,
    Pilot,
    Manual,
}

impl SpectralSummary {
    pub fn from_oracle(res: &SfaResult) -> Self {
        let sz = &res.zdot_singular_values;
        let d = sz.len();
        let asc = |k: usize| sz[d - 1 - k];
        let slow_gap = if res.j < d { asc(res.j).powi(2) - asc(res.j - 1).powi(2) } else { asc(d - 1).powi(2) };
        let frob_sq = res.x_frobenius.powi(2);
        let x_gap_ratio = res.x_gaps.iter().copied().fold(f64::INFINITY, f64::min).max(0.0) / frob_sq;
        SpectralSummary {
            x_frobenius: res.x_frobenius,
            x_spectral: res.x_spectral,
            xdot_frobenius: res.xdot_frobenius,
            xdot_spectral: res.xdot_spectral,
            theta: res.theta,
            gamma: res.gamma,
            zdot_spectral: sz[0],
            zdot_frobenius: sz.iter().map(|s| s * s).sum::<f64>().sqrt(),
            slow_gap,
            x_gap_ratio: if x_gap_ratio.is_finite() { x_gap_ratio } else { 1.0 },
            d,
            j: res.j,
            source: SpectrumSource::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("‖X‖_F", self.x_frobenius),
            ("‖X‖", self.x_spectral),
            ("‖Ẋ‖_F", self.xdot_frobenius),
            ("‖Ẋ‖", self.xdot_spectral),
            ("θ", self.theta),
            ("γ", self.gamma),
            ("‖Ż‖", self.zdot_spectral),
            ("‖Ż‖_F", self.zdot_frobenius),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SfaError::InvalidInput(format!("spectral input {name} must be positive, got {v}")));
            }
        }
        if self.j == 0 || self.j > self.d {
            return Err(SfaError::InvalidInput(format!("J must lie in 1..={}, got {}", self.d, self.j)));
        }
        Ok(())
    }

    /// `‖Ẋ‖ ‖X‖⁻¹`.
    pub fn norm_ratio(&self) -> f64 {
        self.xdot_spectral / self.x_spectral
    }
}

/// Table entries exactly as printed, before any clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableValues {
    pub eps1_prime: f64,
    pub eps5_prime: f64,
    pub eps1_terms: [f64; 3],
    pub eps5_terms: [f64; 3],
    pub eps1: f64,
    pub eta1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub eps5: f64,
    pub eta5: f64,
}

/// Error bounds evaluated at the selected parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedError {
    /// Rank used in the bounds, `min(d, ‖X‖_F² / (σ²(1−η₁)²))`.
    pub rank: f64,
    pub e2: f64,
    pub e3_printed: f64,
    pub e3_rederived: f64,
    pub e4_printed: f64,
    pub e4_rederived: f64,
    pub e5_printed: f64,
    pub e5_rederived: f64,
    /// `E₅ + E₂(1 + E₅)` with the printed chain.
    pub total_printed: f64,
    /// `E₅ + E₂(1 + E₅)` with the re-derived inverse-root bound.
    pub total_rederived: f64,
}

/// Constants that turn accuracy targets into draw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchSizing {
    /// Scale of both row sketches.
    pub row_constant: f64,
    /// Column draws per row draw in the FKV column stage.
    pub column_factor: f64,
    /// Ceiling on any single draw count.
    pub max_draws: u64,
    /// Row samples per column in the centering check.
    pub centering_samples: usize,
}

impl Default for SketchSizing {
    fn default() -> Self {
        SketchSizing { row_constant: 0.15, column_factor: 64.0, max_draws: 50_000_000, centering_samples: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub eps_target: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub eps5: f64,
    pub eta1: f64,
    pub eta5: f64,
    pub delta2: f64,
    pub delta4: f64,
    pub sigma_threshold: f64,
    pub gamma_threshold: f64,
    pub j: usize,
    pub seed: u64,
    pub sizing: SketchSizing,
    pub table: TableValues,
    pub predicted: PredictedError,
    /// One line per value that had to be moved into range.
    pub clamps: Vec<String>,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps3", self.eps3),
            ("eps4", self.eps4),
            ("eps5", self.eps5),
            ("eta1", self.eta1),
            ("eta5", self.eta5),
            ("delta2", self.delta2),
            ("delta4", self.delta4),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(SfaError::InvalidInput(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.j == 0 {
            return Err(SfaError::InvalidInput("J must be at least 1".into()));
        }
        if !(self.sigma_threshold > 0.0 && self.gamma_threshold > 0.0) {
            return Err(SfaError::InvalidInput("singular value thresholds must be positive".into()));
        }
        Ok(())
    }
}

fn clamp_unit(name: &str, v: f64, clamps: &mut Vec<String>) -> f64 {
    if v >= 1.0 {
        clamps.push(format!("{name} = {v:.6e} clamped to {UNIT_CLAMP}"));
        UNIT_CLAMP
    } else {
        v
    }
}

/// Step parameters for an overall error target.
///
/// Every table row is evaluated as printed (kept in `table`); values at or
/// above one are then clamped into range and recorded. The X threshold `σ`
/// is `θ/2` and the Ż threshold is `γ(1 − η₅)` with the slack capped at
/// [`MAX_RETENTION_SLACK`].
pub fn select_parameters(eps_target: f64, spectra: &SpectralSummary, d: usize, j: usize) -> Result<PipelineParams> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(SfaError::InvalidInput(format!("target error must lie in (0, 1), got {eps_target}")));
    }
    let mut spectra = spectra.clone();
    spectra.d = d;
    spectra.j = j;
    spectra.validate()?;
    let sigma = spectra.theta / 2.0;
    select_with_threshold(eps_target, &spectra, sigma)
}

/// As [`select_parameters`] with an explicit X threshold `σ`.
pub fn select_with_threshold(eps: f64, s: &SpectralSummary, sigma: f64) -> Result<PipelineParams> {
    s.validate()?;
    if !(sigma > 0.0) {
        return Err(SfaError::InvalidInput(format!("σ must be positive, got {sigma}")));
    }
    let (d, j) = (s.d as f64, s.j as f64);
    let (xf, xdf) = (s.x_frobenius, s.xdot_frobenius);
    let (theta, gamma) = (s.theta, s.gamma);
    let eta = s.x_gap_ratio;

    let denom5 = s.norm_ratio() - gamma / 10.0;
    if denom5 <= 0.0 {
        return Err(SfaError::InvalidInput(format!(
            "‖Ẋ‖‖X‖⁻¹ − γ/10 = {denom5:.3e} is not positive; the step-5 gap bound is undefined"
        )));
    }

    let eps1_prime = (eps / d.sqrt()).min(eps * sigma * sigma * theta / (xf * xf * s.xdot_spectral * j.sqrt()));
    let eps5_prime = eps / j.sqrt();
    let eps1_terms = [eps1_prime * xf.powi(3) / sigma.powi(3), eps1_prime * eps1_prime * eta, sigma / (4.0 * xf * xf)];
    let eps5_terms = [
        eps5_prime * xdf.powi(3) / (theta.powi(3) * sigma.powi(3)),
        eps1_prime * eps1_prime * eta,
        sigma * theta * theta / (4.0 * xdf * xdf),
    ];
    let min3 = |t: [f64; 3]| t.iter().copied().fold(f64::INFINITY, f64::min);
    let table = TableValues {
        eps1_prime,
        eps5_prime,
        eps1_terms,
        eps5_terms,
        eps1: min3(eps1_terms),
        eta1: min3(eps1_terms),
        eps2: eps,
        eps3: eps / (xdf * j.sqrt()),
        eps4: eps / j.sqrt(),
        eps5: min3(eps5_terms),
        eta5: 1.0 / denom5,
    };

    let mut clamps = Vec::new();
    let positive = |name: &str, v: f64, clamps: &mut Vec<String>| -> Result<f64> {
        if !(v > 0.0) {
            return Err(SfaError::InvalidInput(format!("{name} evaluates to {v:.3e}; check the spectral inputs")));
        }
        Ok(clamp_unit(name, v, clamps))
    };
    let eps1 = positive("eps1", table.eps1, &mut clamps)?;
    let eta1 = positive("eta1", table.eta1, &mut clamps)?;
    let eps2 = positive("eps2", table.eps2, &mut clamps)?;
    let eps3 = positive("eps3", table.eps3, &mut clamps)?;
    let eps4 = positive("eps4", table.eps4, &mut clamps)?;
    let eps5 = positive("eps5", table.eps5, &mut clamps)?;
    let eta5 = positive("eta5", table.eta5, &mut clamps)?;

    let slack = eta5.min(MAX_RETENTION_SLACK);
    if slack < eta5 {
        clamps.push(format!("retention slack below γ capped at {MAX_RETENTION_SLACK} (η₅ = {eta5:.4})"));
    }
    let predicted = predict(s, sigma, &table);

    let params = PipelineParams {
        eps_target: eps,
        eps1,
        eps2,
        eps3,
        eps4,
        eps5,
        eta1,
        eta5,
        delta2: DEFAULT_DELTA,
        delta4: DEFAULT_DELTA,
        sigma_threshold: sigma,
        gamma_threshold: gamma * (1.0 - slack),
        j: s.j,
        seed: 0,
        sizing: SketchSizing::default(),
        table,
        predicted,
        clamps,
    };
    params.validate()?;
    Ok(params)
}

/// Inverse-root error, as printed: `√r ε₁/θ + (1+√r ε₁)(2+√r ε₁)/θ + ε₃`.
pub fn e3_printed(rank: f64, eps1: f64, theta: f64, eps3: f64) -> f64 {
    let a = rank.sqrt() * eps1;
    a / theta + (1.0 + a) * (2.0 + a) / theta + eps3
}

/// Inverse-root error, re-derived from `‖V − V̂‖_F ≤ √r ε₁` and
/// `|σ̂ᵢ − σᵢ| ≤ (η₁/10)‖X‖_F`:
/// `√r ε₁(2 + √r ε₁)/θ + (1 + √r ε₁)² √r (η₁/10)‖X‖_F / (θ(θ − (η₁/10)‖X‖_F)) + ε₃`.
///
/// Infinite when the singular value error can reach `θ`.
pub fn e3_rederived(rank: f64, eps1: f64, eta1: f64, x_frobenius: f64, theta: f64, eps3: f64) -> f64 {
    let a = rank.sqrt() * eps1;
    let shift = eta1 / 10.0 * x_frobenius;
    if shift >= theta {
        return f64::INFINITY;
    }
    a * (2.0 + a) / theta + (1.0 + a).powi(2) * rank.sqrt() * shift / (theta * (theta - shift)) + eps3
}

pub fn e2_bound(d: f64, eps1: f64, eta1: f64, eps2: f64) -> f64 {
    d.sqrt() * eps1 * (1.0 + eta1 * eps1 * eps1) + eps2
}

pub fn e4_bound(xdot_spectral: f64, e3: f64, eps4: f64) -> f64 {
    xdot_spectral * e3 + eps4
}

/// `√J (E₄ / (η₅(‖Ẋ‖‖X‖⁻¹ − γ/10)) + ε₅)`.
pub fn e5_bound(j: f64, e4: f64, eta5: f64, norm_ratio: f64, gamma: f64, eps5: f64) -> f64 {
    j.sqrt() * (e4 / (eta5 * (norm_ratio - gamma / 10.0)) + eps5)
}

pub fn total_bound(e2: f64, e5: f64) -> f64 {
    e5 + e2 * (1.0 + e5)
}

fn predict(s: &SpectralSummary, sigma: f64, t: &TableValues) -> PredictedError {
    let d = s.d as f64;
    let j = s.j as f64;
    let rank = (s.x_frobenius.powi(2) / (sigma * sigma * (1.0 - t.eta1.min(UNIT_CLAMP)).powi(2))).min(d);
    let e2 = e2_bound(d, t.eps1, t.eta1, t.eps2);
    let e3p = e3_printed(rank, t.eps1, s.theta, t.eps3);
    let e3r = e3_rederived(rank, t.eps1, t.eta1, s.x_frobenius, s.theta, t.eps3);
    let e4p = e4_bound(s.xdot_spectral, e3p, t.eps4);
    let e4r = e4_bound(s.xdot_spectral, e3r, t.eps4);
    let e5p = e5_bound(j, e4p, t.eta5, s.norm_ratio(), s.gamma, t.eps5);
    let e5r = e5_bound(j, e4r, t.eta5, s.norm_ratio(), s.gamma, t.eps5);
    PredictedError {
        rank,
        e2,
        e3_printed: e3p,
        e3_rederived: e3r,
        e4_printed: e4p,
        e4_rederived: e4r,
        e5_printed: e5p,
        e5_rederived: e5r,
        total_printed: total_bound(e2, e5p),
        total_rederived: total_bound(e2, e5r),
    }
}
