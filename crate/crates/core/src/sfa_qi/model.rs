use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::params::{select_parameters, PipelineParams, SketchSizing, SpectralSummary, SpectrumSource};
use crate::rng::{stream, streams};
use crate::error::{PipelineStep, Result, SfaError, StepContext};
use crate::linalg::{isometry_error, mat_serde, sorted_svd};
use crate::sketch_ops::{
    approx_matmul_budgeted, estimate_with_norm, fkv_sketch, row_sketch, ApproxSVD, MatVec, RowSource, SuccinctProduct,
    Transposed,
};
use crate::sq_core::{CostLedger, DenseVector, LedgerSnapshot, MatrixSQ, RowView, SampleQuery};

/// Draw counts for each sketch in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchPlan {
    pub centering_samples: usize,
    pub svd_x_rows: u64,
    pub svd_x_cols: u64,
    pub svd_zdot_rows: u64,
    pub svd_zdot_cols: u64,
}

impl SketchPlan {
    /// Row sketches sized by `c · ‖A‖_F² ‖A‖² / (g² ε²)`, the spectral
    /// row-sampling bound with gap `g` in squared singular values: `g = θ²`
    /// for `X` (whitening needs the whole spectrum) and the slow gap for
    /// `Ż`, whose rows are drawn by `Ẋ` row norms so `‖Ż‖_F²` is replaced by
    /// its bound `‖Ẋ‖_F² / θ²`.
    pub fn derive(params: &PipelineParams, s: &SpectralSummary) -> Result<SketchPlan> {
        let c = params.sizing.row_constant;
        let eps2 = params.eps_target * params.eps_target;
        let x_rows = c * s.x_frobenius.powi(2) * s.x_spectral.powi(2) / (s.theta.powi(4) * eps2);
        let z_rows = c * (s.xdot_frobenius / s.theta).powi(2) * s.zdot_spectral.powi(2) / (s.slow_gap.powi(2) * eps2);
        let budget = params.sizing.max_draws as f64;
        let check = |what: &'static str, v: f64| -> Result<u64> {
            if !(v.is_finite()) || v > budget {
                Err(SfaError::BudgetExceeded { what, required: v, budget })
            } else {
                Ok(v.ceil().max(16.0) as u64)
            }
        };
        let svd_x_rows = check("row sketch of X", x_rows).at(PipelineStep::SvdX)?;
        let svd_zdot_rows = check("row sketch of the whitened differences", z_rows).at(PipelineStep::SvdProduct)?;
        let cols = |rows: u64| ((rows as f64 * params.sizing.column_factor).ceil() as u64).max(1);
        Ok(SketchPlan {
            centering_samples: params.sizing.centering_samples,
            svd_x_rows,
            svd_x_cols: cols(svd_x_rows),
            svd_zdot_rows,
            svd_zdot_cols: cols(svd_zdot_rows),
        })
    }
}

/// Ledger movement of the data structures during one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCost {
    pub step: PipelineStep,
    pub x: LedgerSnapshot,
    pub xdot: LedgerSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotCost {
    pub x: LedgerSnapshot,
    pub xdot: LedgerSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringCheck {
    pub samples: usize,
    /// Largest `|mean| / standard error` over columns.
    pub max_z: f64,
    pub warned: bool,
}

/// Rows of `Ż-hat = Ẋ · M` drawn by the row norms of `Ẋ`.
struct ProductRows<'a> {
    xdot_t: &'a MatrixSQ,
    folded: DMatrix<f64>,
}

impl RowSource for ProductRows<'_> {
    fn nrows(&self) -> usize {
        self.xdot_t.ncols()
    }

    fn ncols(&self) -> usize {
        self.folded.ncols()
    }

    fn frobenius_sq(&self) -> Option<f64> {
        None
    }

    fn draw_row(&self, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(self.xdot_t.sample_entry(rng)?.1)
    }

    fn read_row(&self, i: usize) -> (Vec<f64>, f64) {
        let xr = self.xdot_t.column(i);
        let p = xr.iter().map(|v| v * v).sum::<f64>() / self.xdot_t.frobenius_sq();
        let row = self.folded.tr_mul(&DVector::from_vec(xr));
        (row.iter().copied().collect(), p)
    }
}

/// Result of the sampling pipeline.
///
/// Everything needed to answer queries is stored except the input
/// structures, which must be attached with [`QiSfaModel::attach`] after
/// deserialization.
#[derive(Debug, Serialize, Deserialize)]
pub struct QiSfaModel {
    pub n: usize,
    pub d: usize,
    pub j: usize,
    pub params: PipelineParams,
    pub spectra: SpectralSummary,
    pub plan: SketchPlan,
    pub centering: CenteringCheck,
    pub svd_x: ApproxSVD,
    /// `B̂^{-1/2} = V̂ Σ̂⁻¹ V̂ᵀ`.
    #[serde(with = "mat_serde")]
    pub b_inv_half: DMatrix<f64>,
    pub zdot_hat: SuccinctProduct,
    pub svd_zdot: ApproxSVD,
    /// The `J` smallest retained right singular vectors of `Ż-hat`, slowest first.
    #[serde(with = "mat_serde")]
    pub w_hat: DMatrix<f64>,
    pub w_hat_sigma: Vec<f64>,
    pub costs: Vec<StepCost>,
    /// Reads spent estimating the spectra before the build, if any.
    pub pilot_cost: Option<PilotCost>,
    #[serde(skip)]
    inputs: Option<Inputs>,
    #[serde(skip)]
    w_hat_sq: OnceLock<MatrixSQ>,
    #[serde(skip)]
    w_hat_t_sq: OnceLock<MatrixSQ>,
}

#[derive(Debug, Clone)]
struct Inputs {
    x_t: Arc<MatrixSQ>,
    xdot_t: Arc<MatrixSQ>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    Exact,
    Estimated,
}

struct Tracker<'a> {
    x: &'a CostLedger,
    xdot: &'a CostLedger,
    last: (LedgerSnapshot, LedgerSnapshot),
    costs: Vec<StepCost>,
}

impl<'a> Tracker<'a> {
    fn new(x: &'a CostLedger, xdot: &'a CostLedger) -> Self {
        Tracker { x, xdot, last: (x.snapshot(), xdot.snapshot()), costs: Vec::new() }
    }

    fn close(&mut self, step: PipelineStep) {
        let now = (self.x.snapshot(), self.xdot.snapshot());
        self.costs.push(StepCost { step, x: now.0 - self.last.0, xdot: now.1 - self.last.1 });
        self.last = now;
    }
}

/// Builds the model from structures over `Xᵀ` (`d × n`) and `Ẋᵀ` (`d × C`).
///
/// Give the two structures distinct ledgers if their costs should be told
/// apart; step costs are recorded per ledger.
pub fn build<R: Rng + ?Sized>(
    x_t: Arc<MatrixSQ>,
    xdot_t: Arc<MatrixSQ>,
    params: &PipelineParams,
    spectra: &SpectralSummary,
    rng: &mut R,
) -> Result<QiSfaModel> {
    params.validate()?;
    let d = x_t.nrows();
    let n = x_t.ncols();
    if xdot_t.nrows() != d {
        return Err(SfaError::InvalidInput(format!("X has {d} columns but Ẋ has {}", xdot_t.nrows())));
    }
    if params.j > d {
        return Err(SfaError::InvalidInput(format!("J = {} exceeds d = {d}", params.j)));
    }
    let plan = SketchPlan::derive(params, spectra)?;
    let mut tracker = Tracker::new(x_t.ledger(), xdot_t.ledger());

    let centering = centering_check(&x_t, plan.centering_samples, rng);
    if centering.warned {
        log::warn!("X does not look column-centered (max |mean|/se = {:.2})", centering.max_z);
    }
    tracker.close(PipelineStep::Centering);

    let svd_x = fkv_sketch(&Transposed(&x_t), params.sigma_threshold, params.eta1, plan.svd_x_rows, plan.svd_x_cols, rng)
        .at(PipelineStep::SvdX)?;
    tracker.close(PipelineStep::SvdX);
    // Ẑ = X V̂ Σ̂⁻¹ V̂ᵀ is composed from the step-1 description on demand.
    tracker.close(PipelineStep::WhitenedData);

    let b_inv_half = svd_x.spectral_function(-1.0);
    let b_sq = MatrixSQ::build(&b_inv_half, CostLedger::shared()).at(PipelineStep::InverseRoot)?;
    tracker.close(PipelineStep::InverseRoot);

    let zdot_hat = approx_matmul_budgeted(&xdot_t, &b_sq, params.eps4, params.delta4, params.sizing.max_draws, rng)
        .at(PipelineStep::Product)?;
    tracker.close(PipelineStep::Product);

    let rows = ProductRows { xdot_t: &xdot_t, folded: zdot_hat.folded(d) };
    let svd_zdot =
        fkv_sketch(&rows, params.gamma_threshold, 0.0, plan.svd_zdot_rows, plan.svd_zdot_cols, rng).at(PipelineStep::SvdProduct)?;
    tracker.close(PipelineStep::SvdProduct);

    if svd_zdot.rank < params.j {
        return Err(SfaError::EmptySpectrum { threshold: params.gamma_threshold, norm: svd_zdot.frobenius_sq_estimate.sqrt() }
            .at(PipelineStep::StoreWeights));
    }
    let r = svd_zdot.rank;
    let w_hat = DMatrix::from_fn(d, params.j, |row, c| svd_zdot.v_hat[(row, r - 1 - c)]);
    let w_hat_sigma = (0..params.j).map(|c| svd_zdot.sigma_hat[r - 1 - c]).collect();
    tracker.close(PipelineStep::StoreWeights);

    Ok(QiSfaModel {
        n,
        d,
        j: params.j,
        params: params.clone(),
        spectra: spectra.clone(),
        plan,
        centering,
        svd_x,
        b_inv_half,
        zdot_hat,
        svd_zdot,
        w_hat,
        w_hat_sigma,
        costs: tracker.costs,
        pilot_cost: None,
        inputs: Some(Inputs { x_t, xdot_t }),
        w_hat_sq: OnceLock::new(),
        w_hat_t_sq: OnceLock::new(),
    })
}

fn centering_check<R: Rng + ?Sized>(x_t: &MatrixSQ, samples: usize, rng: &mut R) -> CenteringCheck {
    let n = x_t.ncols();
    let d = x_t.nrows();
    if samples < 2 {
        return CenteringCheck { samples, max_z: 0.0, warned: false };
    }
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..samples {
        let i = rng.random_range(0..n);
        for j in 0..d {
            let v = x_t.entry(j, i);
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    let m = samples as f64;
    let mut max_z: f64 = 0.0;
    for j in 0..d {
        let mean = sum[j] / m;
        let var = (sum_sq[j] / m - mean * mean).max(0.0) * m / (m - 1.0);
        let se = (var / m).sqrt();
        let z = if se > 0.0 { mean.abs() / se } else if mean == 0.0 { 0.0 } else { f64::INFINITY };
        max_z = max_z.max(z);
    }
    CenteringCheck { samples, max_z, warned: max_z > 4.0 }
}

impl QiSfaModel {
    pub fn attach(&mut self, x_t: Arc<MatrixSQ>, xdot_t: Arc<MatrixSQ>) -> Result<()> {
        if x_t.nrows() != self.d || x_t.ncols() != self.n || xdot_t.nrows() != self.d {
            return Err(SfaError::InvalidInput("attached structures do not match the model's shape".into()));
        }
        self.inputs = Some(Inputs { x_t, xdot_t });
        Ok(())
    }

    fn inputs(&self) -> Result<&Inputs> {
        self.inputs.as_ref().ok_or_else(|| SfaError::InvalidInput("model has no attached input structures".into()))
    }

    pub fn x_t(&self) -> Result<&Arc<MatrixSQ>> {
        Ok(&self.inputs()?.x_t)
    }

    pub fn xdot_t(&self) -> Result<&Arc<MatrixSQ>> {
        Ok(&self.inputs()?.xdot_t)
    }

    /// Entry reads on the `X` structure during the build and the pilot.
    pub fn x_entry_reads(&self) -> u64 {
        let pilot = self.pilot_cost.map_or(0, |p| p.x.entry_reads);
        pilot + self.costs.iter().map(|c| c.x.entry_reads).sum::<u64>()
    }

    pub fn xdot_entry_reads(&self) -> u64 {
        let pilot = self.pilot_cost.map_or(0, |p| p.xdot.entry_reads);
        pilot + self.costs.iter().map(|c| c.xdot.entry_reads).sum::<u64>()
    }

    /// `‖Ŵᵀ Ŵ − I‖`.
    pub fn w_hat_isometry(&self) -> f64 {
        isometry_error(&self.w_hat)
    }

    fn w_hat_sq(&self) -> Result<&MatrixSQ> {
        if let Some(m) = self.w_hat_sq.get() {
            return Ok(m);
        }
        let built = MatrixSQ::build(&self.w_hat, CostLedger::shared())?;
        Ok(self.w_hat_sq.get_or_init(|| built))
    }

    fn w_hat_t_sq(&self) -> Result<&MatrixSQ> {
        if let Some(m) = self.w_hat_t_sq.get() {
            return Ok(m);
        }
        let built = MatrixSQ::build(&self.w_hat.transpose(), CostLedger::shared())?;
        Ok(self.w_hat_t_sq.get_or_init(|| built))
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(SfaError::InvalidInput(format!("row {i} out of range for n = {}", self.n)));
        }
        Ok(())
    }

    /// `Ẑ(i,·) = X(i,·) B̂^{-1/2}`; reads the `d` entries of row `i`.
    pub fn z_hat_row(&self, i: usize) -> Result<Vec<f64>> {
        self.check_row(i)?;
        let x = DVector::from_vec(self.x_t()?.column(i));
        Ok(self.b_inv_half.tr_mul(&x).iter().copied().collect())
    }

    /// `Û(i,·) = X(i,·) V̂ Σ̂⁻¹`.
    pub fn u_hat_row(&self, i: usize) -> Result<Vec<f64>> {
        self.check_row(i)?;
        Ok(self.svd_x.left_row(&self.x_t()?.column(i)))
    }

    /// `Ŷ(i,·) = Ẑ(i,·) Ŵ`.
    pub fn output_row(&self, i: usize) -> Result<Vec<f64>> {
        let z = DVector::from_vec(self.z_hat_row(i)?);
        Ok(self.w_hat.tr_mul(&z).iter().copied().collect())
    }

    /// Draws a column of `Ŷ(i,·)` with probability proportional to its
    /// squared entry, by rejection over the columns of `Ŵ`.
    pub fn sample_output_row(&self, i: usize, rng: &mut dyn RngCore) -> Result<usize> {
        let z = self.z_hat_row(i)?;
        if self.output_row(i)?.iter().all(|&y| y == 0.0) {
            return Err(SfaError::DegenerateDistribution.at(PipelineStep::Output));
        }
        let handle = MatVec::new(self.w_hat_sq()?, z).at(PipelineStep::Output)?;
        handle.sample(rng).at(PipelineStep::Output)
    }

    /// Sample/query handle for `Ŷ(i,·)`.
    pub fn output_handle(&self, i: usize) -> Result<MatVec<'_>> {
        MatVec::new(self.w_hat_sq()?, self.z_hat_row(i)?)
    }

    /// `Ŷ(i,j) = ⟨Ẑ(i,·), Ŵ(·,j)⟩`, by summation or by the median-of-means
    /// estimator sampling from the stored column of `Ŵ`.
    pub fn query_entry(&self, i: usize, j: usize, mode: QueryMode, eps: f64, delta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        self.check_row(i)?;
        if j >= self.j {
            return Err(SfaError::InvalidInput(format!("column {j} out of range for J = {}", self.j)));
        }
        let z = DenseVector::new(self.z_hat_row(i)?);
        match mode {
            QueryMode::Exact => Ok(z.as_slice().iter().zip(self.w_hat.column(j).iter()).map(|(a, b)| a * b).sum()),
            QueryMode::Estimated => {
                let w_t = self.w_hat_t_sq()?;
                let column = RowView::new(w_t, j);
                let z_norm_sq = crate::sq_core::Query::norm_sq(&z);
                estimate_with_norm(&column, &z, z_norm_sq, eps, delta, rng).at(PipelineStep::Output)
            }
        }
    }

    /// Every row of `Ŷ`, densified without charging the ledger.
    pub fn dense_output(&self) -> Result<DMatrix<f64>> {
        let x = self.x_t()?.to_dense().transpose();
        Ok(x * &self.b_inv_half * &self.w_hat)
    }

    /// Every row of `Ẑ`, densified without charging the ledger.
    pub fn dense_whitened(&self) -> Result<DMatrix<f64>> {
        Ok(self.x_t()?.to_dense().transpose() * &self.b_inv_half)
    }

    /// `Ż-hat` in full, densified without charging the ledger.
    pub fn dense_zdot_hat(&self) -> Result<DMatrix<f64>> {
        Ok(self.zdot_hat.to_dense(self.xdot_t()?))
    }
}

/// Rows in the default pilot sketch of each input.
pub const DEFAULT_PILOT_ROWS: u64 = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub eps_target: f64,
    pub j: usize,
    /// Known spectra; when absent they are estimated by a pilot sketch.
    pub spectra: Option<SpectralSummary>,
    pub pilot_rows: u64,
    pub sizing: SketchSizing,
}

impl FitOptions {
    pub fn new(eps_target: f64, j: usize) -> Self {
        FitOptions { eps_target, j, spectra: None, pilot_rows: DEFAULT_PILOT_ROWS, sizing: SketchSizing::default() }
    }
}

/// Spectra, parameter selection and build in one call, with every random
/// choice drawn from streams of `seed`.
pub fn fit(x_t: Arc<MatrixSQ>, xdot_t: Arc<MatrixSQ>, opts: &FitOptions, seed: u64) -> Result<QiSfaModel> {
    fit_with(x_t, xdot_t, opts, seed, |_| {})
}

/// As [`fit`], letting `adjust` override the selected parameters before
/// the build.
pub fn fit_with(
    x_t: Arc<MatrixSQ>,
    xdot_t: Arc<MatrixSQ>,
    opts: &FitOptions,
    seed: u64,
    adjust: impl FnOnce(&mut PipelineParams),
) -> Result<QiSfaModel> {
    let before = (x_t.ledger().snapshot(), xdot_t.ledger().snapshot());
    let (spectra, pilot_cost) = match &opts.spectra {
        Some(s) => (s.clone(), None),
        None => {
            let s = pilot_spectra(&x_t, &xdot_t, opts.j, opts.pilot_rows, &mut stream(seed, streams::PILOT))?;
            let cost =
                PilotCost { x: x_t.ledger().snapshot() - before.0, xdot: xdot_t.ledger().snapshot() - before.1 };
            (s, Some(cost))
        }
    };
    let mut params = select_parameters(opts.eps_target, &spectra, x_t.nrows(), opts.j)?;
    params.sizing = opts.sizing;
    params.seed = seed;
    adjust(&mut params);
    let mut model = build(x_t, xdot_t, &params, &spectra, &mut stream(seed, streams::SVD_X))?;
    model.pilot_cost = pilot_cost;
    Ok(model)
}

/// Spectral quantities from a small row sketch of `X` and of `Ẋ`, for
/// choosing parameters without the dense oracle.
pub fn pilot_spectra<R: Rng + ?Sized>(x_t: &MatrixSQ, xdot_t: &MatrixSQ, j: usize, rows: u64, rng: &mut R) -> Result<SpectralSummary> {
    let d = x_t.nrows();
    let sx = row_sketch(&Transposed(x_t), rows, rng)?.scaled();
    let svd = sorted_svd(&sx, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    if sv.len() < d || sv[d - 1] <= 1e-10 * sv[0] {
        return Err(SfaError::RankDeficient { theta: sv.get(d - 1).copied().unwrap_or(0.0) });
    }
    let mut scaled = svd.v.clone();
    for (l, mut col) in scaled.column_iter_mut().enumerate() {
        col /= sv[l];
    }
    let b_inv_half = &scaled * svd.v.transpose();

    let sd = row_sketch(&Transposed(xdot_t), rows, rng)?.scaled();
    let xdot_spectral = crate::linalg::spectral_norm(&sd);
    let t = &sd * &b_inv_half;
    let mut sz: Vec<f64> = sorted_svd(&t, false).singular_values.iter().copied().collect();
    sz.resize(d, 0.0);
    let asc = |k: usize| sz[d - 1 - k];
    let slow_gap = if j < d { asc(j).powi(2) - asc(j - 1).powi(2) } else { asc(d - 1).powi(2) };
    let x_frob_sq = x_t.frobenius_sq();
    let min_gap = sv.windows(2).map(|w| w[0] * w[0] - w[1] * w[1]).fold(f64::INFINITY, f64::min);
    Ok(SpectralSummary {
        x_frobenius: x_frob_sq.sqrt(),
        x_spectral: sv[0],
        xdot_frobenius: xdot_t.frobenius_sq().sqrt(),
        xdot_spectral,
        theta: sv[d - 1],
        gamma: asc(0),
        zdot_spectral: sz[0],
        zdot_frobenius: sz.iter().map(|s| s * s).sum::<f64>().sqrt(),
        slow_gap,
        x_gap_ratio: if min_gap.is_finite() { min_gap.max(0.0) / x_frob_sq } else { 1.0 },
        d,
        j,
        source: SpectrumSource::Pilot,
    })
}
