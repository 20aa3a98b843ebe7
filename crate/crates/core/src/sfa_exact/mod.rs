//! Exact slow feature analysis: preprocessing and the dense solver.

mod dataset;
mod sfa;

pub use dataset::{
    difference_rows, expanded_width, normalize, pairwise_differentiate, quadratic_expand, Dataset, DiffMatrix, Mode,
    DEFAULT_EXPANSION_CAP,
};
pub use sfa::{delta_value, exact_sfa, exact_sfa_with, ConstraintCheck, ExactOptions, SfaResult, RANK_TOLERANCE, TIE_TOLERANCE};
