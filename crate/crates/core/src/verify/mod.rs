//! Verification harness: distribution tests, perturbation checks, error
//! budget audits and access-count regressions.

mod audit;
mod chi_square;
mod davis_kahan;
pub mod policy;
mod report;
mod sublinear;
pub mod suites;

pub use audit::{entry_audit, error_budget_audit, measure, structures, AuditConfig, SeedMeasurement};
pub use chi_square::{chi_square_test, pearson, ChiSquare};
pub use davis_kahan::{davis_kahan_check, BoundStatus, DavisKahan, EigenvectorCheck};
pub use report::{Comparison, TrialReport};
pub use sublinear::{polylog_exponent, sublinearity_audit, GridPoint, SublinearityConfig};
pub use suites::Suite;
