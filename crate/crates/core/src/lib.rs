//! Slow feature analysis with sampling-based linear algebra.
//!
//! [`sq_core`] stores vectors and matrices for squared-magnitude sampling,
//! [`sketch_ops`] builds approximate SVDs, products and inner products on
//! top of it, [`sfa_exact`] is the dense reference solver and [`sfa_qi`]
//! the sampling pipeline. [`verify`] holds the statistical checks.

// `!(x > 0.0)` is used on purpose so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sfa_exact;
pub mod sfa_qi;
pub mod sketch_ops;
pub mod sq_core;
pub mod synth;
pub mod verify;

pub use error::{PipelineStep, Result, SfaError};
