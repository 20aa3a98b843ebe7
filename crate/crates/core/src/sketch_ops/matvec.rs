//! Sample/query access to `V·w` by rejection sampling.
//!
//! With `V` (`n × k`) given through a structure over `Vᵀ`, a proposal column
//! `i` is drawn with probability `w_i²‖V(·,i)‖² / Φ` (`Φ = Σ_i w_i²‖V(·,i)‖²`),
//! then a row `s` from `D_{V(·,i)}`. The candidate is accepted with
//! probability `(Vw)(s)² / (k · Σ_i w_i² V(s,i)²)`, which is at most one by
//! Cauchy–Schwarz. Accepted rows follow `D_{Vw}`, and the mean acceptance
//! probability is `1 / (k·C(V,w))` with `C(V,w) = Φ / ‖Vw‖²`.

use std::sync::Mutex;

use rand::{Rng, RngCore};

use crate::error::{Result, SfaError};
use crate::sq_core::{AccessCosts, CostLedger, HandleKind, MatrixSQ, Query, SampleQuery, WeightTree};

/// Multiple of `k·Ĉ` after which a single draw is declared stalled.
pub const STALL_FACTOR: f64 = 64.0;

#[derive(Debug, Default, Clone, Copy)]
struct RejectStats {
    trials: u64,
    acceptance_sum: f64,
}

#[derive(Debug)]
pub struct MatVec<'a> {
    vt: &'a MatrixSQ,
    w: Vec<f64>,
    proposal: WeightTree,
    stats: Mutex<RejectStats>,
    max_trials: u64,
}

impl<'a> MatVec<'a> {
    /// `vt` is the structure over `Vᵀ` (`k × n`); `w` has length `k`.
    pub fn new(vt: &'a MatrixSQ, w: Vec<f64>) -> Result<Self> {
        if w.len() != vt.nrows() {
            return Err(SfaError::InvalidInput(format!(
                "weight vector has length {} but V has {} columns",
                w.len(),
                vt.nrows()
            )));
        }
        let mass: Vec<f64> = w.iter().enumerate().map(|(i, wi)| wi * vt.row_norm_sq(i).sqrt()).collect();
        let proposal = WeightTree::build(&mass, CostLedger::shared())?;
        if proposal.norm_sq() <= 0.0 {
            return Err(SfaError::DegenerateDistribution);
        }
        Ok(MatVec { vt, w, proposal, stats: Mutex::new(RejectStats::default()), max_trials: 50_000_000 })
    }

    pub fn with_max_trials(mut self, max_trials: u64) -> Self {
        self.max_trials = max_trials;
        self
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// `Φ = Σ_i w_i²‖V(·,i)‖²`.
    pub fn phi(&self) -> f64 {
        self.proposal.norm_sq()
    }

    /// Running estimate of `C(V,w)` from all trials so far, if any were made.
    pub fn estimated_overhead(&self) -> Option<f64> {
        let s = *self.stats.lock().expect("stats lock");
        (s.acceptance_sum > 0.0).then(|| s.trials as f64 / (self.k() as f64 * s.acceptance_sum))
    }

    /// Total proposals made so far.
    pub fn trials(&self) -> u64 {
        self.stats.lock().expect("stats lock").trials
    }

    /// One proposal: the row and its acceptance probability.
    fn propose(&self, rng: &mut dyn RngCore) -> Result<(usize, f64)> {
        let i = self.proposal.sample(rng)?;
        let s = self.vt.sample_in_row(i, rng)?;
        let mut dot = 0.0;
        let mut mass = 0.0;
        for (j, wj) in self.w.iter().enumerate() {
            let term = wj * self.vt.entry(j, s);
            dot += term;
            mass += term * term;
        }
        let a = if mass > 0.0 { dot * dot / (self.k() as f64 * mass) } else { 0.0 };
        Ok((s, a.min(1.0)))
    }

    fn record(&self, trials: u64, acceptance_sum: f64) -> RejectStats {
        let mut s = self.stats.lock().expect("stats lock");
        s.trials += trials;
        s.acceptance_sum += acceptance_sum;
        *s
    }

    fn stall_cap(&self, history: RejectStats, trials: u64, acceptance_sum: f64) -> f64 {
        let k = self.k() as f64;
        let total_a = history.acceptance_sum + acceptance_sum;
        let total_t = (history.trials + trials) as f64;
        if total_a <= 0.0 {
            return STALL_FACTOR * k;
        }
        STALL_FACTOR * k * (total_t / (k * total_a)).max(1.0)
    }

    fn stall(&self, trials: u64, acceptance_sum: f64) -> SfaError {
        let s = self.record(trials, acceptance_sum);
        let overhead =
            if s.acceptance_sum > 0.0 { s.trials as f64 / (self.k() as f64 * s.acceptance_sum) } else { f64::INFINITY };
        SfaError::RejectionStall { trials, overhead }
    }
}

impl Query for MatVec<'_> {
    fn dim(&self) -> usize {
        self.vt.ncols()
    }

    fn query(&self, i: usize) -> f64 {
        self.w.iter().enumerate().map(|(j, wj)| wj * self.vt.entry(j, i)).sum()
    }
}

impl SampleQuery for MatVec<'_> {
    fn sample(&self, rng: &mut dyn RngCore) -> Result<usize> {
        let history = *self.stats.lock().expect("stats lock");
        let mut trials = 0u64;
        let mut acceptance_sum = 0.0;
        loop {
            let (s, a) = self.propose(rng)?;
            trials += 1;
            acceptance_sum += a;
            self.vt.ledger().draw(1);
            if rng.random::<f64>() < a {
                self.record(trials, acceptance_sum);
                return Ok(s);
            }
            if trials >= self.max_trials || trials as f64 > self.stall_cap(history, trials, acceptance_sum) {
                return Err(self.stall(trials, acceptance_sum));
            }
        }
    }

    /// `‖Vw‖ = √(kΦ · E[a])`, averaging acceptance probabilities until the
    /// relative standard error of `‖Vw‖²` is about `ν / 2`.
    fn norm_estimate(&self, nu: f64, rng: &mut dyn RngCore) -> Result<f64> {
        if !(nu > 0.0) {
            return Err(SfaError::InvalidInput(format!("norm tolerance must be positive, got {nu}")));
        }
        let k = self.k() as f64;
        let mut trials = 0u64;
        let mut acceptance_sum = 0.0;
        let min_trials = (STALL_FACTOR * k) as u64;
        loop {
            let (_, a) = self.propose(rng)?;
            trials += 1;
            acceptance_sum += a;
            if trials >= min_trials && acceptance_sum > 0.0 {
                let c_hat = trials as f64 / (k * acceptance_sum);
                if trials as f64 >= 3.0 * k * c_hat / (nu * nu) {
                    break;
                }
            }
            if trials >= self.max_trials {
                return Err(self.stall(trials, acceptance_sum));
            }
        }
        self.record(trials, acceptance_sum);
        Ok((k * self.phi() * acceptance_sum / trials as f64).sqrt())
    }

    fn kind(&self) -> HandleKind {
        HandleKind::Composed
    }

    fn costs(&self) -> AccessCosts {
        let k = self.k() as f64;
        let depth = (self.vt.ncols().max(2) as f64).log2().ceil();
        let c = self.estimated_overhead().unwrap_or(1.0);
        let proposal = 2.0 * depth + 1.0 + k;
        AccessCosts { sample: k * c * proposal, query: k, norm: 3.0 * k * c * proposal }
    }
}

/// Dense `C(V,w)` for tests and reports; reads every entry of `V`.
pub fn exact_overhead(v: &nalgebra::DMatrix<f64>, w: &[f64]) -> f64 {
    let phi: f64 = w.iter().enumerate().map(|(i, wi)| wi * wi * v.column(i).norm_squared()).sum();
    let vw = v * nalgebra::DVector::from_column_slice(w);
    phi / vw.norm_squared()
}
