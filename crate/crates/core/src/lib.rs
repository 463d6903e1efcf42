//! Multi-level restricted maximum likelihood estimation and kriging for
//! scattered spatial data.

pub mod error;
pub mod geometry;

pub use error::{Error, Result};
pub mod kernels;
pub mod basis;
pub mod linalg;
pub mod mlcov;
pub mod reml;
pub mod krige;
pub mod harness;
