//! Numerical laboratory for complete convergence of Cesàro means: an exact
//! finite probability engine, one-dimensional Wasserstein-2 tools, seeded
//! sequence models, tail-series estimators and subsequence constructions.

pub mod error;
pub mod estimators;
pub mod laws;
pub mod measures;
pub mod models;
pub mod prob;
pub mod subsequence;

pub use error::{Error, Result};
