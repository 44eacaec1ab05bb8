//! Spline-based association matrices for tabular data.
//!
//! Pairwise (one spline edge per variable pair) and multivariate (one
//! additive spline model per target) matrices, with Pearson and histogram
//! NMI baselines, feature ranking, synthetic benchmarks and SVG/JSON output.

pub mod additive;
pub mod dataset;
pub mod forest;
pub mod matrix;
pub mod ranking;
pub mod render;
pub mod ridge;
pub mod rng;
pub mod scoring;
pub mod spline;
pub mod synth;
