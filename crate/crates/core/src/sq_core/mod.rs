//! Sampling data structures and sample/query access.

mod handle;
mod ledger;
mod matrix;
mod tree;

pub use handle::{AccessCosts, DenseVector, HandleKind, Query, RowView, SampleQuery};
pub use ledger::{CostLedger, LedgerSnapshot};
pub use matrix::MatrixSQ;
pub use tree::{WeightTree, REAGGREGATE_EVERY};

