//! Sampling-based linear algebra primitives.

mod fkv;
mod inner;
mod matmul;
mod matvec;

pub use fkv::{fkv_approx_svd, row_sketch, sketch as fkv_sketch, ApproxSVD, FkvConfig, RowSketch, RowSource, Transposed};
pub use inner::{estimate_inner_product, estimate_with_norm, median, median_of_means_sizes, NORM_TOLERANCE};
pub use matmul::{
    approx_matmul, approx_matmul_budgeted, approx_matmul_relative, required_draws, sample_product, SuccinctProduct,
    DEFAULT_MAX_DRAWS,
};
pub use matvec::{exact_overhead, MatVec, STALL_FACTOR};
