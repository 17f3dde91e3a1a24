//! Randomization test for the high-dimensional two-sample Behrens–Fisher problem.
//!
//! The main entry point is [`randomization::randomization_test`]. Baseline
//! procedures live in [`competitors`], population-level oracles in [`theory`],
//! and the Monte-Carlo harness in [`simulation`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod competitors;
pub mod data;
pub mod empirical;
pub mod error;
pub mod io;
pub mod parallel;
pub mod randomization;
pub mod result;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod theory;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use result::{Method, TestResult};
pub use rng::RngSeed;
