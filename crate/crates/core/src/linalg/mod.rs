//! Sparse SPD factorization and conjugate-gradient solvers.

mod cholesky;
pub mod dense;
pub mod ordering;
mod pcg;
mod sparse;

pub use cholesky::{analyze_and_factor, log_det, solve_chol, CholFactor};
pub use dense::DenseCholesky;
pub use ordering::{compute_ordering, OrderingMethod};
pub use pcg::{cg, pcg, pcg_observed, PcgReport, REPLACE_EVERY};
pub use sparse::SparseSpd;
