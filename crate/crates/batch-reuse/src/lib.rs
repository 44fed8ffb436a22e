//! Batch-reuse SGD for Gaussian single-index models.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod experiments;
pub mod exponents;
pub mod hermite;
pub mod io;
pub mod linalg;
pub mod model;
pub mod network;
pub mod rng;
pub mod trainer;
