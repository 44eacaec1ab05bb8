//! Deterministic synthetic datasets for the three benchmark behaviours:
//! nonlinear (square and cube), heteroscedastic noise, and a lagged sinusoid.
//!
//! Each random stream (the driver `x` and every noise column) has its own RNG
//! derived from `(seed, stream name)`, so a noise stream can be replayed on
//! its own with [`noise_stream`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::rng::{derive_seed, rng_from};

pub const MIN_ROWS: usize = 20;
pub const DEFAULT_SHIFT: usize = 150;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("need n >= {need}, got {got}")]
    TooFewRows { need: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Nonlinear,
    Heteroscedastic,
    Lagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Iid,
    #[default]
    Sorted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub experiment: Experiment,
    pub n: usize,
    pub seed: u64,
    pub shift: usize,
    pub ordering: Ordering,
    /// Lagged only: drop the first `shift` rows, whose lag wrapped around.
    pub drop_wrapped: bool,
}

impl SynthSpec {
    pub fn new(experiment: Experiment, n: usize, seed: u64) -> Self {
        Self {
            experiment,
            n,
            seed,
            shift: DEFAULT_SHIFT,
            ordering: Ordering::default(),
            drop_wrapped: false,
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset, SynthError> {
    match spec.experiment {
        Experiment::Nonlinear => gen_nonlinear(spec.n, spec.seed),
        Experiment::Heteroscedastic => gen_heteroscedastic(spec.n, spec.seed),
        Experiment::Lagged => {
            gen_lagged(spec.n, spec.seed, spec.shift, spec.ordering, spec.drop_wrapped)
        }
    }
}

fn check_rows(n: usize, need: usize) -> Result<(), SynthError> {
    if n < need {
        return Err(SynthError::TooFewRows { need, got: n });
    }
    Ok(())
}

fn uniform_stream(seed: u64, name: &str, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = rng_from(derive_seed(seed, &[name]));
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// `n` draws of `N(0, sd_i)` from the stream `name`; `sd` yields one
/// standard deviation per row.
pub fn noise_stream(seed: u64, name: &str, sd: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut rng = rng_from(derive_seed(seed, &[name]));
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    sd.into_iter().map(|s| s * standard.sample(&mut rng)).collect()
}

fn dataset(cols: Vec<(&str, Vec<f64>)>) -> Dataset {
    Dataset::new(cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect())
        .expect("generated columns are rectangular and finite")
}

/// `x1 ~ U(-2, 2)`, `x2 = x1² + N(0, 0.1)`, `x3 = x1³ + N(0, 0.1)`.
pub fn gen_nonlinear(n: usize, seed: u64) -> Result<Dataset, SynthError> {
    check_rows(n, MIN_ROWS)?;
    let x = uniform_stream(seed, "x", n, -2.0, 2.0);
    let e2 = noise_stream(seed, "noise_x2", std::iter::repeat_n(0.1, n));
    let e3 = noise_stream(seed, "noise_x3", std::iter::repeat_n(0.1, n));
    let x2 = x.iter().zip(&e2).map(|(x, e)| x * x + e).collect();
    let x3 = x.iter().zip(&e3).map(|(x, e)| x * x * x + e).collect();
    Ok(dataset(vec![("x1", x), ("x2", x2), ("x3", x3)]))
}

/// Alternate names for the heteroscedastic columns.
pub const HETERO_ALIASES: [(&str, &str); 4] = [
    ("y", "x2_hetero"),
    ("x2", "x2_hetero"),
    ("z", "x3_homo"),
    ("x3", "x3_homo"),
];

/// `x1 ~ U(0, 10)`, `x2_hetero = 2·x1 + N(0, x1)`, `x3_homo = 2·x1 + N(0, 5)`.
pub fn gen_heteroscedastic(n: usize, seed: u64) -> Result<Dataset, SynthError> {
    check_rows(n, MIN_ROWS)?;
    let x = uniform_stream(seed, "x", n, 0.0, 10.0);
    let e2 = noise_stream(seed, "noise_x2", x.iter().copied());
    let e3 = noise_stream(seed, "noise_x3", std::iter::repeat_n(5.0, n));
    let hetero = x.iter().zip(&e2).map(|(x, e)| 2.0 * x + e).collect();
    let homo = x.iter().zip(&e3).map(|(x, e)| 2.0 * x + e).collect();
    Ok(dataset(vec![("x1", x), ("x2_hetero", hetero), ("x3_homo", homo)]))
}

/// Moves every value `shift` positions later, wrapping around.
pub fn roll(values: &[f64], shift: usize) -> Vec<f64> {
    let n = values.len();
    (0..n).map(|i| values[(i + n - shift % n) % n]).collect()
}

/// `x1 ~ U(0, 10)` (sorted or in draw order), `x2 = sin(x1) + N(0, 0.1)`,
/// `x3 = sin(roll(x1, shift)) + N(0, 0.1)`.
pub fn gen_lagged(
    n: usize,
    seed: u64,
    shift: usize,
    ordering: Ordering,
    drop_wrapped: bool,
) -> Result<Dataset, SynthError> {
    check_rows(n, shift + MIN_ROWS)?;
    let mut x = uniform_stream(seed, "x", n, 0.0, 10.0);
    if ordering == Ordering::Sorted {
        x.sort_by(f64::total_cmp);
    }
    let e2 = noise_stream(seed, "noise_x2", std::iter::repeat_n(0.1, n));
    let e3 = noise_stream(seed, "noise_x3", std::iter::repeat_n(0.1, n));
    let x2 = x.iter().zip(&e2).map(|(x, e)| x.sin() + e).collect();
    let x3 = roll(&x, shift)
        .iter()
        .zip(&e3)
        .map(|(x, e)| x.sin() + e)
        .collect();
    let mut d = dataset(vec![("x1", x), ("x2", x2), ("x3", x3)]);
    if drop_wrapped && shift > 0 {
        d = Dataset::new(
            d.columns()
                .iter()
                .map(|c| (c.name.clone(), c.values[shift..].to_vec()))
                .collect(),
        )
        .expect("truncated columns stay rectangular");
    }
    Ok(d)
}

/// Alias table for an experiment's columns (only heteroscedastic has any).
pub fn column_aliases(experiment: Experiment) -> &'static [(&'static str, &'static str)] {
    match experiment {
        Experiment::Heteroscedastic => &HETERO_ALIASES,
        _ => &[],
    }
}
