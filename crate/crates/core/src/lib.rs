//! Estimation of sparse spatial weight matrices for spatial autoregressive
//! processes on regular lattices.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod gridcsv;
pub mod lasso;
pub mod lattice;
pub mod metrics;
pub mod mlbench;
pub mod montecarlo;
pub mod resample;
pub mod simulate;

pub use error::{Error, Result};
