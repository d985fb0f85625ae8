//! Probabilistic causal network inference from short, noisy time series.
//!
//! The pipeline smooths replicate measurements with Gaussian processes,
//! generates synthetic causally related pairs from the fitted processes,
//! trains Siamese detectors for undirected causality and lag direction,
//! and turns detector output (or autoencoder witnesses, or the weights of
//! deep-wide predictors) into causal graphs.

pub mod autoenc;
pub mod cli;
pub mod config;
pub mod data;
pub mod deepwide;
pub mod detectors;
pub mod error;
pub mod graph;
pub mod gp;
pub mod linalg;
pub mod nn;
pub mod persist;
pub mod simulate;
pub mod synth;

pub use error::{Error, Result};
