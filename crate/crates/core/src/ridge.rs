//! Ridge-regularized least squares via the normal equations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RidgeError {
    #[error("design has {rows} rows but target has {len} entries")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("empty system ({rows} x {cols})")]
    Empty { rows: usize, cols: usize },
    #[error("non-finite entry in the system")]
    NonFinite,
    #[error("ridge lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("normal equations are not positive definite even after jitter")]
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub coeffs: Vec<f64>,
    /// Diagonal jitter added when the factorization failed, if any.
    pub jitter: Option<f64>,
}

/// Solves `argmin ||A c - b||² + λ||c||²` through `(AᵀA + λI) c = Aᵀb`.
///
/// When the Cholesky factorization fails (rank-deficient `AᵀA` with small λ)
/// a jitter of `1e-10 · trace / m` is added to the diagonal and reported.
pub fn ridge_solve(a: &DMatrix<f64>, b: &[f64], lambda: f64) -> Result<RidgeSolution, RidgeError> {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return Err(RidgeError::Empty { rows: n, cols: m });
    }
    if b.len() != n {
        return Err(RidgeError::DimensionMismatch { rows: n, len: b.len() });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(RidgeError::InvalidLambda(lambda));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(RidgeError::NonFinite);
    }
    let rhs = a.tr_mul(&DVector::from_column_slice(b));
    let mut gram = a.tr_mul(a);
    for i in 0..m {
        gram[(i, i)] += lambda;
    }
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(RidgeSolution {
            coeffs: chol.solve(&rhs).as_slice().to_vec(),
            jitter: None,
        });
    }
    let trace: f64 = (0..m).map(|i| gram[(i, i)]).sum();
    let jitter = (1e-10 * trace / m as f64).max(f64::MIN_POSITIVE);
    for i in 0..m {
        gram[(i, i)] += jitter;
    }
    let chol = gram.cholesky().ok_or(RidgeError::Singular)?;
    Ok(RidgeSolution {
        coeffs: chol.solve(&rhs).as_slice().to_vec(),
        jitter: Some(jitter),
    })
}
