//! Clamped uniform B-spline basis on [0, 1].
//!
//! Every edge function is a linear combination of these basis functions,
//! evaluated on max-min normalized inputs. Values outside [0, 1] are clamped
//! to the boundary, so an edge curve stays bounded by its coefficients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_INTERVALS: usize = 10;
pub const MAX_DEGREE: usize = 15;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SplineError {
    #[error("spline degree must be between 1 and 15, got {0}")]
    InvalidDegree(usize),
    #[error("number of knot intervals must be at least 1, got {0}")]
    InvalidIntervals(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisParams", into = "BasisParams")]
pub struct SplineBasis {
    degree: usize,
    n_intervals: usize,
    knots: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct BasisParams {
    degree: usize,
    n_intervals: usize,
}

impl TryFrom<BasisParams> for SplineBasis {
    type Error = SplineError;
    fn try_from(p: BasisParams) -> Result<Self, Self::Error> {
        SplineBasis::new(p.n_intervals, p.degree)
    }
}

impl From<SplineBasis> for BasisParams {
    fn from(b: SplineBasis) -> Self {
        BasisParams {
            degree: b.degree,
            n_intervals: b.n_intervals,
        }
    }
}

impl SplineBasis {
    /// Clamped uniform knot vector: `degree + 1` copies of 0 and 1 around
    /// `n_intervals - 1` evenly spaced interior knots.
    pub fn new(n_intervals: usize, degree: usize) -> Result<Self, SplineError> {
        if n_intervals == 0 {
            return Err(SplineError::InvalidIntervals(n_intervals));
        }
        if degree == 0 || degree > MAX_DEGREE {
            return Err(SplineError::InvalidDegree(degree));
        }
        let mut knots = Vec::with_capacity(n_intervals + 2 * degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        knots.extend((1..n_intervals).map(|i| i as f64 / n_intervals as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self {
            degree,
            n_intervals,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn n_basis(&self) -> usize {
        self.n_intervals + self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Knot averages; using them as coefficients reproduces `u`.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.n_basis())
            .map(|i| self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    // Index of the first of the p+1 functions nonzero at u (knot span - p).
    fn span_start(&self, u: f64) -> usize {
        ((u * self.n_intervals as f64).floor() as usize).min(self.n_intervals - 1)
    }

    /// The `degree + 1` potentially nonzero values at `u` and the index of
    /// the first one.
    pub fn eval_local(&self, u: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        debug_assert_eq!(out.len(), p + 1);
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        let first = self.span_start(u);
        let span = first + p;
        let t = &self.knots;
        // de Boor's triangular scheme for the nonzero basis values.
        let mut left = [0.0f64; MAX_DEGREE + 1];
        let mut right = [0.0f64; MAX_DEGREE + 1];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        first
    }

    /// All `n_basis` values at `u` (clamped into [0, 1]).
    pub fn eval(&self, u: f64) -> Vec<f64> {
        let mut full = vec![0.0; self.n_basis()];
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_local(u, &mut local);
        full[first..first + local.len()].copy_from_slice(&local);
        full
    }

    /// Spline value `sum_i coeffs[i] * B_i(u)`.
    pub fn eval_curve(&self, coeffs: &[f64], u: f64) -> f64 {
        debug_assert_eq!(coeffs.len(), self.n_basis());
        let mut local = [0.0f64; MAX_DEGREE + 1];
        let local = &mut local[..=self.degree];
        let first = self.eval_local(u, local);
        local
            .iter()
            .zip(&coeffs[first..])
            .map(|(b, c)| b * c)
            .sum()
    }

    /// Row `i` is `eval(us[i])`.
    pub fn design_matrix(&self, us: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(us.len(), self.n_basis());
        self.fill_design(us, &mut m, 0);
        m
    }

    /// Writes basis rows for `us` into `m` starting at column `col0`.
    pub fn fill_design(&self, us: &[f64], m: &mut DMatrix<f64>, col0: usize) {
        let mut local = vec![0.0; self.degree + 1];
        for (i, &u) in us.iter().enumerate() {
            let first = self.eval_local(u, &mut local);
            for (k, b) in local.iter().enumerate() {
                m[(i, col0 + first + k)] = *b;
            }
        }
    }
}

impl Default for SplineBasis {
    fn default() -> Self {
        SplineBasis::new(DEFAULT_INTERVALS, DEFAULT_DEGREE).expect("valid defaults")
    }
}
