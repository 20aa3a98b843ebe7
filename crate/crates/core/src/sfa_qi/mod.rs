//! Sampling-based slow feature analysis.

mod model;
mod params;

pub use model::{build, fit, fit_with, pilot_spectra, CenteringCheck, FitOptions, PilotCost, QiSfaModel, QueryMode, SketchPlan, StepCost, DEFAULT_PILOT_ROWS};
pub use params::{
    e2_bound, e3_printed, e3_rederived, e4_bound, e5_bound, select_parameters, select_with_threshold, total_bound,
    PipelineParams, PredictedError, SketchSizing, SpectralSummary, SpectrumSource, TableValues, DEFAULT_DELTA,
    MAX_RETENTION_SLACK, UNIT_CLAMP,
};
