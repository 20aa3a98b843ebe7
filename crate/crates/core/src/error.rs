use std::fmt;

use thiserror::Error;

/// Pipeline stage of the sampling-based SFA build, used to tag propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PipelineStep {
    Centering,
    SvdX,
    WhitenedData,
    InverseRoot,
    Product,
    SvdProduct,
    StoreWeights,
    Output,
}

impl PipelineStep {
    pub fn number(self) -> u8 {
        match self {
            PipelineStep::Centering => 0,
            PipelineStep::SvdX => 1,
            PipelineStep::WhitenedData => 2,
            PipelineStep::InverseRoot => 3,
            PipelineStep::Product => 4,
            PipelineStep::SvdProduct => 5,
            PipelineStep::StoreWeights => 6,
            PipelineStep::Output => 7,
        }
    }
}

impl fmt::Display for PipelineStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PipelineStep::Centering => "centering check",
            PipelineStep::SvdX => "approximate SVD of X",
            PipelineStep::WhitenedData => "whitened data access",
            PipelineStep::InverseRoot => "inverse square root",
            PipelineStep::Product => "whitened difference product",
            PipelineStep::SvdProduct => "approximate SVD of whitened differences",
            PipelineStep::StoreWeights => "weight storage",
            PipelineStep::Output => "output",
        };
        write!(f, "step {} ({name})", self.number())
    }
}

#[derive(Debug, Error)]
pub enum SfaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for length {len}")]
    IndexError { index: usize, len: usize },

    #[error("sampling distribution undefined for an all-zero vector")]
    DegenerateDistribution,

    #[error("no singular value survives threshold {threshold} (Frobenius norm {norm})")]
    EmptySpectrum { threshold: f64, norm: f64 },

    #[error("{what} requires {required} but the configured budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        required: f64,
        budget: f64,
    },

    #[error("rejection sampler stalled after {trials} trials (overhead estimate {overhead:.3e})")]
    RejectionStall { trials: u64, overhead: f64 },

    #[error("matrix is rank deficient (smallest singular value {theta:.3e})")]
    RankDeficient { theta: f64 },

    #[error("{step}: {source}")]
    Step {
        step: PipelineStep,
        #[source]
        source: Box<SfaError>,
    },

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SfaError {
    pub fn at(self, step: PipelineStep) -> SfaError {
        match self {
            SfaError::Step { .. } => self,
            other => SfaError::Step {
                step,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with any step tag removed.
    pub fn root(&self) -> &SfaError {
        match self {
            SfaError::Step { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn step(&self) -> Option<PipelineStep> {
        match self {
            SfaError::Step { step, .. } => Some(*step),
            _ => None,
        }
    }
}

pub type Result<T, E = SfaError> = std::result::Result<T, E>;

pub(crate) trait StepContext<T> {
    fn at(self, step: PipelineStep) -> Result<T>;
}

impl<T> StepContext<T> for Result<T> {
    fn at(self, step: PipelineStep) -> Result<T> {
        self.map_err(|e| e.at(step))
    }
}
