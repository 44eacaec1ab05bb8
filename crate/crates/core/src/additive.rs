//! Single-layer spline additive models.
//!
//! A pairwise model is one edge `y ≈ φ(x)`; an additive model is
//! `y ≈ intercept + Σ_j φ_j(x_j)`. Both are linear in the spline
//! coefficients, so fitting is a single ridge solve on the training split.
//! Sparsity comes from [`prune_refit`]: edges whose attribution share falls
//! below a threshold are removed and the remainder refitted.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::value_range;
use crate::ridge::{ridge_solve, RidgeError};
use crate::rng::{derive_seed, gather, holdout_split};
use crate::scoring::{edge_attribution, mean, AttributionVector, MetricKind, ScoreError, SkillMetric};
use crate::spline::{SplineBasis, SplineError, DEFAULT_DEGREE, DEFAULT_INTERVALS};

/// Minimum rows for any fit.
pub const MIN_ROWS: usize = 20;

/// Largest absolute drop in test skill a pruning step may cause.
pub const MAX_PRUNE_SKILL_LOSS: f64 = 0.02;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("column {column:?} has {found} rows, expected {expected}")]
    LengthMismatch {
        column: String,
        found: usize,
        expected: usize,
    },
    #[error("input {0:?} is constant")]
    ConstantInput(String),
    #[error("target {0:?} is constant")]
    ConstantTarget(String),
    #[error("all inputs are constant")]
    AllInputsConstant,
    #[error("target {0:?} cannot also be an input")]
    TargetAsInput(String),
    #[error("input {0:?} given twice")]
    DuplicateInput(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("invalid fit config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Ridge(#[from] RidgeError),
    #[error(transparent)]
    Metric(#[from] ScoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub ridge_lambda: f64,
    pub prune_threshold: f64,
    pub max_prune_iters: usize,
    pub holdout_fraction: f64,
    pub n_intervals: usize,
    pub degree: usize,
    pub seed: u64,
    pub metric: MetricKind,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: 1e-3,
            prune_threshold: 0.02,
            max_prune_iters: 10,
            holdout_fraction: 0.2,
            n_intervals: DEFAULT_INTERVALS,
            degree: DEFAULT_DEGREE,
            seed: 42,
            metric: MetricKind::Nse,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::InvalidConfig(m));
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return bad(format!("ridge_lambda {} must be >= 0", self.ridge_lambda));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return bad(format!("prune_threshold {} must be in [0, 1)", self.prune_threshold));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!(
                "holdout_fraction {} must be in (0, 1)",
                self.holdout_fraction
            ));
        }
        SplineBasis::new(self.n_intervals, self.degree)?;
        Ok(())
    }

    pub fn basis(&self) -> Result<SplineBasis, FitError> {
        Ok(SplineBasis::new(self.n_intervals, self.degree)?)
    }
}

/// One learned univariate function φ over a max-min normalized input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeModel {
    pub input_name: String,
    pub basis: SplineBasis,
    pub coeffs: Vec<f64>,
    pub input_min: f64,
    pub input_max: f64,
}

impl EdgeModel {
    pub fn normalize(&self, x: f64) -> f64 {
        ((x - self.input_min) / (self.input_max - self.input_min)).clamp(0.0, 1.0)
    }

    /// φ at a normalized coordinate (clamped into [0, 1]).
    pub fn eval_normalized(&self, u: f64) -> f64 {
        self.basis.eval_curve(&self.coeffs, u)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_normalized(self.normalize(x))
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub train_metric: SkillMetric,
    pub test_metric: SkillMetric,
    pub n_train: usize,
    pub n_test: usize,
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub train_metric: SkillMetric,
    pub test_metric: SkillMetric,
    /// Attribution of the final edges on the training rows.
    pub per_edge_attribution: AttributionVector,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped_constant: Vec<String>,
    pub pruned: Vec<String>,
    pub prune_iterations: usize,
    /// The last pruning step was undone because test skill dropped too far.
    pub prune_reverted: bool,
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub target_name: String,
    pub intercept: f64,
    pub edges: Vec<EdgeModel>,
    pub fit_config: FitConfig,
    pub split_seed: u64,
    pub diagnostics: FitDiagnostics,
}

impl AdditiveModel {
    /// `intercept + Σ φ_j(x_j)` for every row of the named columns.
    pub fn predict(&self, columns: &[(&str, &[f64])]) -> Result<Vec<f64>, FitError> {
        let n = columns.first().map(|c| c.1.len()).unwrap_or(0);
        let mut out = vec![self.intercept; n];
        for edge in &self.edges {
            let col = lookup(columns, &edge.input_name)?;
            if col.len() != n {
                return Err(FitError::LengthMismatch {
                    column: edge.input_name.clone(),
                    found: col.len(),
                    expected: n,
                });
            }
            for (o, &x) in out.iter_mut().zip(col) {
                *o += edge.eval(x);
            }
        }
        Ok(out)
    }

    pub fn predict_row(&self, row: &[(&str, f64)]) -> Result<f64, FitError> {
        let mut acc = self.intercept;
        for edge in &self.edges {
            let x = row
                .iter()
                .find(|(n, _)| *n == edge.input_name)
                .ok_or_else(|| FitError::MissingColumn(edge.input_name.clone()))?
                .1;
            acc += edge.eval(x);
        }
        Ok(acc)
    }

    pub fn edge(&self, input: &str) -> Option<&EdgeModel> {
        self.edges.iter().find(|e| e.input_name == input)
    }
}

fn lookup<'a>(columns: &[(&str, &'a [f64])], name: &str) -> Result<&'a [f64], FitError> {
    columns
        .iter()
        .find(|(n, _)| *n == name)
        .map(|c| c.1)
        .ok_or_else(|| FitError::MissingColumn(name.to_string()))
}

/// A non-constant input with its normalization range.
struct PreparedInput<'a> {
    name: &'a str,
    values: &'a [f64],
    min: f64,
    max: f64,
}

impl PreparedInput<'_> {
    fn normalized_rows(&self, rows: &[usize]) -> Vec<f64> {
        let span = self.max - self.min;
        rows.iter()
            .map(|&r| ((self.values[r] - self.min) / span).clamp(0.0, 1.0))
            .collect()
    }
}

struct BlockFit {
    intercept: f64,
    edges: Vec<EdgeModel>,
    jitter: Option<f64>,
}

// Ridge solve on [B_1 | ... | B_m | 1] against the train-centered target.
// Each fitted edge is shifted to zero mean on the train rows, the shift
// going into the intercept; predictions are unaffected.
fn solve_blocks(
    inputs: &[PreparedInput<'_>],
    y: &[f64],
    train: &[usize],
    basis: &SplineBasis,
    lambda: f64,
) -> Result<BlockFit, FitError> {
    let y_train = gather(y, train);
    let y_mean = mean(&y_train);
    if inputs.is_empty() {
        return Ok(BlockFit {
            intercept: y_mean,
            edges: vec![],
            jitter: None,
        });
    }
    let nb = basis.n_basis();
    let cols = inputs.len() * nb + 1;
    let mut design = DMatrix::zeros(train.len(), cols);
    let mut us = Vec::with_capacity(inputs.len());
    for (j, input) in inputs.iter().enumerate() {
        let u = input.normalized_rows(train);
        basis.fill_design(&u, &mut design, j * nb);
        us.push(u);
    }
    design.column_mut(cols - 1).fill(1.0);
    let centered: Vec<f64> = y_train.iter().map(|v| v - y_mean).collect();
    let sol = ridge_solve(&design, &centered, lambda)?;

    let mut intercept = y_mean + sol.coeffs[cols - 1];
    let mut edges = Vec::with_capacity(inputs.len());
    for (j, input) in inputs.iter().enumerate() {
        let mut coeffs = sol.coeffs[j * nb..(j + 1) * nb].to_vec();
        let shift = mean(
            &us[j]
                .iter()
                .map(|&u| basis.eval_curve(&coeffs, u))
                .collect::<Vec<_>>(),
        );
        // partition of unity: subtracting from every coefficient shifts φ
        coeffs.iter_mut().for_each(|c| *c -= shift);
        intercept += shift;
        edges.push(EdgeModel {
            input_name: input.name.to_string(),
            basis: basis.clone(),
            coeffs,
            input_min: input.min,
            input_max: input.max,
        });
    }
    Ok(BlockFit {
        intercept,
        edges,
        jitter: sol.jitter,
    })
}

fn check_len(name: &str, values: &[f64], n: usize) -> Result<(), FitError> {
    if values.len() != n {
        return Err(FitError::LengthMismatch {
            column: name.to_string(),
            found: values.len(),
            expected: n,
        });
    }
    Ok(())
}

/// Fits a single edge `y ≈ φ(x)` on a seeded train split.
///
/// The intercept is folded into the edge coefficients (the basis sums to 1),
/// so the returned edge alone reproduces the predictions.
pub fn fit_pairwise(
    input: (&str, &[f64]),
    target: (&str, &[f64]),
    cfg: &FitConfig,
) -> Result<(EdgeModel, PairDiagnostics), FitError> {
    cfg.validate()?;
    let (x_name, x) = input;
    let (y_name, y) = target;
    let n = y.len();
    check_len(x_name, x, n)?;
    if n < MIN_ROWS {
        return Err(FitError::TooFewRows {
            need: MIN_ROWS,
            got: n,
        });
    }
    let (min, max) = value_range(x).ok_or_else(|| FitError::ConstantInput(x_name.to_string()))?;
    if value_range(y).is_none() {
        return Err(FitError::ConstantTarget(y_name.to_string()));
    }
    let seed = derive_seed(cfg.seed, &[y_name, x_name]);
    let (train, test) = holdout_split(n, cfg.holdout_fraction, seed);
    let basis = cfg.basis()?;
    let prepared = [PreparedInput {
        name: x_name,
        values: x,
        min,
        max,
    }];
    let fit = solve_blocks(&prepared, y, &train, &basis, cfg.ridge_lambda)?;
    let mut edge = fit.edges.into_iter().next().expect("one edge");
    edge.coeffs.iter_mut().for_each(|c| *c += fit.intercept);

    let skill = |rows: &[usize]| -> Result<SkillMetric, FitError> {
        let pred: Vec<f64> = rows.iter().map(|&r| edge.eval(x[r])).collect();
        Ok(SkillMetric::compute(cfg.metric, &gather(y, rows), &pred)?)
    };
    let diagnostics = PairDiagnostics {
        train_metric: skill(&train)?,
        test_metric: skill(&test)?,
        n_train: train.len(),
        n_test: test.len(),
        jitter: fit.jitter,
    };
    Ok((edge, diagnostics))
}

/// The train/test rows a fitted additive model was built on.
pub fn model_split(model: &AdditiveModel, n: usize) -> (Vec<usize>, Vec<usize>) {
    holdout_split(n, model.fit_config.holdout_fraction, model.split_seed)
}

fn subset_columns(columns: &[(&str, &[f64])], rows: &[usize]) -> Vec<(String, Vec<f64>)> {
    columns
        .iter()
        .map(|(n, v)| (n.to_string(), gather(v, rows)))
        .collect()
}

fn as_refs(owned: &[(String, Vec<f64>)]) -> Vec<(&str, &[f64])> {
    owned.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect()
}

struct FitContext<'a> {
    target_name: &'a str,
    y: &'a [f64],
    train: Vec<usize>,
    test: Vec<usize>,
    split_seed: u64,
    cfg: &'a FitConfig,
    basis: SplineBasis,
}

impl FitContext<'_> {
    fn fit(
        &self,
        inputs: &[PreparedInput<'_>],
        skipped_constant: Vec<String>,
    ) -> Result<AdditiveModel, FitError> {
        let fit = solve_blocks(inputs, self.y, &self.train, &self.basis, self.cfg.ridge_lambda)?;
        let mut model = AdditiveModel {
            target_name: self.target_name.to_string(),
            intercept: fit.intercept,
            edges: fit.edges,
            fit_config: self.cfg.clone(),
            split_seed: self.split_seed,
            diagnostics: FitDiagnostics {
                train_metric: SkillMetric {
                    kind: self.cfg.metric,
                    value: 0.0,
                    clipped: 0.0,
                },
                test_metric: SkillMetric {
                    kind: self.cfg.metric,
                    value: 0.0,
                    clipped: 0.0,
                },
                per_edge_attribution: AttributionVector {
                    raw: vec![],
                    normalized: vec![],
                    degenerate: false,
                },
                n_train: self.train.len(),
                n_test: self.test.len(),
                skipped_constant,
                pruned: vec![],
                prune_iterations: 0,
                prune_reverted: false,
                jitter: fit.jitter,
            },
        };
        let columns: Vec<(&str, &[f64])> = inputs.iter().map(|p| (p.name, p.values)).collect();
        let train_cols = subset_columns(&columns, &self.train);
        let test_cols = subset_columns(&columns, &self.test);
        let train_refs = as_refs(&train_cols);
        let test_refs = as_refs(&test_cols);
        let y_train = gather(self.y, &self.train);
        let y_test = gather(self.y, &self.test);
        let train_pred = model.predict_on(&train_refs, y_train.len())?;
        let test_pred = model.predict_on(&test_refs, y_test.len())?;
        model.diagnostics.train_metric = SkillMetric::compute(self.cfg.metric, &y_train, &train_pred)?;
        model.diagnostics.test_metric = SkillMetric::compute(self.cfg.metric, &y_test, &test_pred)?;
        model.diagnostics.per_edge_attribution = edge_attribution(&model, &train_refs)?;
        Ok(model)
    }
}

impl AdditiveModel {
    // predict with an explicit row count so zero-edge models work without columns
    fn predict_on(&self, columns: &[(&str, &[f64])], n: usize) -> Result<Vec<f64>, FitError> {
        if self.edges.is_empty() {
            return Ok(vec![self.intercept; n]);
        }
        self.predict(columns)
    }
}

fn prepare_inputs<'a>(
    inputs: &[(&'a str, &'a [f64])],
    target_name: &str,
    n: usize,
) -> Result<(Vec<PreparedInput<'a>>, Vec<String>), FitError> {
    let mut seen = HashSet::new();
    let mut prepared = Vec::new();
    let mut skipped = Vec::new();
    for &(name, values) in inputs {
        if name == target_name {
            return Err(FitError::TargetAsInput(name.to_string()));
        }
        if !seen.insert(name) {
            return Err(FitError::DuplicateInput(name.to_string()));
        }
        check_len(name, values, n)?;
        match value_range(values) {
            Some((min, max)) => prepared.push(PreparedInput {
                name,
                values,
                min,
                max,
            }),
            None => skipped.push(name.to_string()),
        }
    }
    Ok((prepared, skipped))
}

fn context<'a>(
    inputs: &[(&str, &[f64])],
    target: (&'a str, &'a [f64]),
    cfg: &'a FitConfig,
    split_seed: Option<u64>,
) -> Result<FitContext<'a>, FitError> {
    cfg.validate()?;
    let (y_name, y) = target;
    let n = y.len();
    if n < MIN_ROWS {
        return Err(FitError::TooFewRows {
            need: MIN_ROWS,
            got: n,
        });
    }
    if value_range(y).is_none() {
        return Err(FitError::ConstantTarget(y_name.to_string()));
    }
    let split_seed = split_seed.unwrap_or_else(|| {
        let mut keys: Vec<&str> = inputs.iter().map(|c| c.0).collect();
        keys.sort_unstable();
        keys.insert(0, y_name);
        derive_seed(cfg.seed, &keys)
    });
    let (train, test) = holdout_split(n, cfg.holdout_fraction, split_seed);
    Ok(FitContext {
        target_name: y_name,
        y,
        train,
        test,
        split_seed,
        cfg,
        basis: cfg.basis()?,
    })
}

/// Fits `y ≈ intercept + Σ φ_j(x_j)` over all non-constant inputs, then
/// applies [`prune_refit`] with the configured threshold.
pub fn fit_additive(
    inputs: &[(&str, &[f64])],
    target: (&str, &[f64]),
    cfg: &FitConfig,
) -> Result<AdditiveModel, FitError> {
    let full = fit_additive_unpruned(inputs, target, cfg)?;
    prune_refit(&full, inputs, target.1, cfg.prune_threshold)
}

/// The block fit over all non-constant inputs, without pruning.
pub fn fit_additive_unpruned(
    inputs: &[(&str, &[f64])],
    target: (&str, &[f64]),
    cfg: &FitConfig,
) -> Result<AdditiveModel, FitError> {
    let ctx = context(inputs, target, cfg, None)?;
    let (prepared, skipped) = prepare_inputs(inputs, target.0, target.1.len())?;
    if prepared.is_empty() {
        return Err(FitError::AllInputsConstant);
    }
    ctx.fit(&prepared, skipped)
}

/// Removes edges whose training attribution share is below `threshold` and
/// refits the rest, until nothing more is removed or `max_prune_iters` is
/// reached. A step that lowers test skill by more than
/// [`MAX_PRUNE_SKILL_LOSS`] is undone and pruning stops.
pub fn prune_refit(
    model: &AdditiveModel,
    inputs: &[(&str, &[f64])],
    y: &[f64],
    threshold: f64,
) -> Result<AdditiveModel, FitError> {
    let cfg = &model.fit_config;
    let ctx = context(inputs, (&model.target_name, y), cfg, Some(model.split_seed))?;
    let mut current = model.clone();
    let mut pruned = model.diagnostics.pruned.clone();
    let mut iterations = 0;
    let mut reverted = false;
    while iterations < cfg.max_prune_iters && !current.edges.is_empty() {
        let shares = &current.diagnostics.per_edge_attribution.normalized;
        let (keep, drop): (Vec<_>, Vec<_>) = current
            .edges
            .iter()
            .zip(shares)
            .partition(|(_, &s)| s >= threshold);
        if drop.is_empty() {
            break;
        }
        iterations += 1;
        let keep_inputs: Vec<PreparedInput<'_>> = keep
            .iter()
            .map(|(e, _)| {
                Ok(PreparedInput {
                    name: e.input_name.as_str(),
                    values: lookup(inputs, &e.input_name)?,
                    min: e.input_min,
                    max: e.input_max,
                })
            })
            .collect::<Result<_, FitError>>()?;
        let candidate = ctx.fit(&keep_inputs, current.diagnostics.skipped_constant.clone())?;
        let loss = current.diagnostics.test_metric.value - candidate.diagnostics.test_metric.value;
        if loss > MAX_PRUNE_SKILL_LOSS {
            reverted = true;
            break;
        }
        pruned.extend(drop.iter().map(|(e, _)| e.input_name.clone()));
        current = candidate;
    }
    current.diagnostics.pruned = pruned;
    current.diagnostics.prune_iterations = iterations;
    current.diagnostics.prune_reverted = reverted;
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{nse, pearson};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    fn noise(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| rng.sample(d)).collect()
    }

    #[test]
    fn identity_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = uniform(&mut rng, 2000, 0.0, 1.0);
        let (edge, diag) = fit_pairwise(("x", &x), ("y", &x), &FitConfig::default()).unwrap();
        assert!(diag.test_metric.value >= 0.999);
        let (lo, hi) = (edge.input_min, edge.input_max);
        let mut se = 0.0;
        let grid: Vec<f64> = (0..=90).map(|k| 0.05 + 0.9 * k as f64 / 90.0).collect();
        for &t in &grid {
            let x = lo + t * (hi - lo);
            se += (edge.eval(x) - x).powi(2);
        }
        assert!((se / grid.len() as f64).sqrt() < 1e-3);
    }

    #[test]
    fn quadratic_near_ceiling() {
        // ceiling 1 - 0.01 / Var(x^2), Var(x^2) = E x^4 - (E x^2)^2 = 16/5 - 16/9
        let var_sq: f64 = 16.0 / 5.0 - 16.0 / 9.0;
        let ceiling = 1.0 - 0.01 / var_sq;
        assert!((ceiling - 0.993).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = uniform(&mut rng, 5000, -2.0, 2.0);
        let e = noise(&mut rng, 5000, 0.1);
        let y: Vec<f64> = x.iter().zip(&e).map(|(x, e)| x * x + e).collect();
        let (_, diag) = fit_pairwise(("x", &x), ("y", &y), &FitConfig::default()).unwrap();
        assert!((0.97..=1.0).contains(&diag.test_metric.value), "{:?}", diag.test_metric);
    }

    #[test]
    fn non_injective_inverse_is_weak() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xp = uniform(&mut rng, 5000, -2.0, 2.0);
        let sq: Vec<f64> = xp.iter().map(|v| v * v).collect();
        let (_, diag) = fit_pairwise(("sq", &sq), ("xp", &xp), &FitConfig::default()).unwrap();
        assert!(diag.test_metric.value <= 0.1);
    }

    #[test]
    fn pairwise_errors() {
        let x = vec![1.0; 30];
        let y: Vec<f64> = (0..30).map(f64::from).collect();
        let cfg = FitConfig::default();
        assert_eq!(
            fit_pairwise(("x", &x), ("y", &y), &cfg).unwrap_err(),
            FitError::ConstantInput("x".into())
        );
        assert_eq!(
            fit_pairwise(("y", &y[..10]), ("y2", &y[..10]), &cfg).unwrap_err(),
            FitError::TooFewRows { need: 20, got: 10 }
        );
    }

    #[test]
    fn collinear_inputs_share_attribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = uniform(&mut rng, 2000, 0.0, 1.0);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v + 5.0).collect();
        let m = fit_additive(&[("x", &x), ("x2", &x2)], ("y", &x), &FitConfig::default()).unwrap();
        assert!(m.diagnostics.test_metric.value >= 0.999);
        let shares = &m.diagnostics.per_edge_attribution.normalized;
        assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pure_noise_target_prunes_to_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = uniform(&mut rng, 1000, 0.0, 1.0);
        let b = uniform(&mut rng, 1000, 0.0, 1.0);
        let y = noise(&mut rng, 1000, 1.0);
        let cfg = FitConfig {
            prune_threshold: 0.9,
            ..FitConfig::default()
        };
        let m = fit_additive(&[("a", &a), ("b", &b)], ("y", &y), &cfg).unwrap();
        assert!(m.edges.is_empty(), "{:?}", m.diagnostics);
        let (train, _) = model_split(&m, 1000);
        assert!((m.intercept - mean(&gather(&y, &train))).abs() < 1e-12);
        assert!(m.diagnostics.test_metric.value.abs() < 0.05);
        let p = m.predict(&[("a", &a)]).unwrap();
        assert!(p.iter().all(|&v| v == m.intercept));
    }

    #[test]
    fn prune_removes_distractor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 3000;
        let x = uniform(&mut rng, n, -1.0, 1.0);
        let d = uniform(&mut rng, n, 0.0, 1.0);
        let e = noise(&mut rng, n, 0.05);
        let y: Vec<f64> = x.iter().zip(&e).map(|(x, e)| x * x + e).collect();
        // oracle: the distractor alone explains nothing
        let (_, solo) = fit_pairwise(("d", &d), ("y", &y), &FitConfig::default()).unwrap();
        assert!(solo.test_metric.value.abs() < 0.02);
        let cfg = FitConfig::default();
        let full = fit_additive_unpruned(&[("x", &x), ("d", &d)], ("y", &y), &cfg).unwrap();
        assert_eq!(full.edges.len(), 2);
        let m = prune_refit(&full, &[("x", &x), ("d", &d)], &y, 0.02).unwrap();
        assert_eq!(m.edges.len(), 1);
        assert_eq!(m.edges[0].input_name, "x");
        assert_eq!(m.diagnostics.pruned, vec!["d".to_string()]);
        // tau = 0 leaves the model alone
        let same = prune_refit(&full, &[("x", &x), ("d", &d)], &y, 0.0).unwrap();
        assert_eq!(same.edges, full.edges);
        assert_eq!(same.intercept, full.intercept);
    }

    #[test]
    fn cube_beats_square_for_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5000;
        let x = uniform(&mut rng, n, -2.0, 2.0);
        let e2 = noise(&mut rng, n, 0.1);
        let e3 = noise(&mut rng, n, 0.1);
        let sq: Vec<f64> = x.iter().zip(&e2).map(|(x, e)| x * x + e).collect();
        let cu: Vec<f64> = x.iter().zip(&e3).map(|(x, e)| x * x * x + e).collect();

        // conditional-mean oracle over 200 bins of each input
        let bin_nse = |input: &[f64]| {
            let (lo, hi) = value_range(input).unwrap();
            let mut sums = vec![(0.0, 0usize); 200];
            let bin = |v: f64| (((v - lo) / (hi - lo) * 200.0) as usize).min(199);
            for (v, t) in input.iter().zip(&x) {
                let s = &mut sums[bin(*v)];
                s.0 += t;
                s.1 += 1;
            }
            let pred: Vec<f64> = input.iter().map(|v| {
                let s = sums[bin(*v)];
                s.0 / s.1 as f64
            }).collect();
            nse(&x, &pred).unwrap()
        };
        // in-sample bias of a 200-bin mean is about bins / n = 0.04
        assert!(bin_nse(&sq) < 0.1);
        assert!(bin_nse(&cu) > 0.9);

        let m = fit_additive(&[("sq", &sq), ("cu", &cu)], ("x", &x), &FitConfig::default()).unwrap();
        let s = crate::scoring::strength(
            &m,
            &[("sq", &sq[..]), ("cu", &cu[..])],
            &x,
            MetricKind::Nse,
        )
        .unwrap();
        let total: f64 = s.strengths.iter().sum();
        let cube_share = s
            .names
            .iter()
            .zip(&s.attribution.normalized)
            .find(|(n, _)| *n == "cu")
            .map(|(_, v)| *v)
            .unwrap();
        assert!(cube_share >= 0.85, "{s:?}");
        assert!(m.diagnostics.test_metric.value >= 0.85);
        assert!(total > 0.0);
    }

    #[test]
    fn predict_is_sum_of_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = uniform(&mut rng, 500, 0.0, 3.0);
        let b = uniform(&mut rng, 500, -1.0, 1.0);
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a.sin() + b * b).collect();
        let m = fit_additive_unpruned(&[("a", &a), ("b", &b)], ("y", &y), &FitConfig::default()).unwrap();
        let p = m.predict(&[("a", &a), ("b", &b)]).unwrap();
        for i in 0..100 {
            let manual = m.intercept + m.edges[0].eval_normalized(m.edges[0].normalize(a[i]))
                + m.edges[1].eval_normalized(m.edges[1].normalize(b[i]));
            assert!((p[i] - manual).abs() < 1e-12);
            let row = m.predict_row(&[("a", a[i]), ("b", b[i])]).unwrap();
            assert!((row - p[i]).abs() < 1e-12);
        }
        // input at the stored minimum evaluates phi(0)
        let at_min = m.edges[0].eval(m.edges[0].input_min - 10.0);
        assert_eq!(at_min, m.edges[0].eval_normalized(0.0));
        assert!(matches!(m.predict(&[("a", &a)]), Err(FitError::MissingColumn(_))));

        // additivity: mixed second difference vanishes
        let f = |x: f64, z: f64| m.predict_row(&[("a", x), ("b", z)]).unwrap();
        let mixed = f(0.3, -0.5) - f(0.3, 0.7) - f(2.1, -0.5) + f(2.1, 0.7);
        assert!(mixed.abs() <= 1e-9);
    }

    #[test]
    fn deterministic_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = uniform(&mut rng, 800, 0.0, 1.0);
        let b = uniform(&mut rng, 800, 0.0, 1.0);
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + 3.0 * b).collect();
        let cfg = FitConfig::default();
        let m1 = fit_additive(&[("a", &a), ("b", &b)], ("y", &y), &cfg).unwrap();
        let m2 = fit_additive(&[("a", &a), ("b", &b)], ("y", &y), &cfg).unwrap();
        assert_eq!(m1, m2);
        let a7: Vec<f64> = a.iter().map(|v| v * 7.0).collect();
        let m3 = fit_additive(&[("a", &a7), ("b", &b)], ("y", &y), &cfg).unwrap();
        let p1 = m1.predict(&[("a", &a), ("b", &b)]).unwrap();
        let p3 = m3.predict(&[("a", &a7), ("b", &b)]).unwrap();
        for (x, z) in p1.iter().zip(&p3) {
            assert!((x - z).abs() < 1e-9);
        }
        // y = a + 3b: attribution follows the part standard deviations
        let s = crate::scoring::strength(&m1, &[("a", &a[..]), ("b", &b[..])], &y, MetricKind::Nse).unwrap();
        let sd_a = crate::scoring::std_dev(&a);
        let sd_b = crate::scoring::std_dev(&b.iter().map(|v| 3.0 * v).collect::<Vec<_>>());
        let oracle = [sd_a / (sd_a + sd_b), sd_b / (sd_a + sd_b)];
        for (got, want) in s.attribution.normalized.iter().zip(oracle) {
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
        assert!((s.strengths.iter().sum::<f64>() - s.skill.clipped).abs() < 1e-10);
        let _ = pearson;
    }

    #[test]
    fn rejects_bad_inputs() {
        let v: Vec<f64> = (0..50).map(f64::from).collect();
        let c = vec![2.0; 50];
        let cfg = FitConfig::default();
        assert_eq!(
            fit_additive(&[("c", &c)], ("y", &v), &cfg).unwrap_err(),
            FitError::AllInputsConstant
        );
        assert_eq!(
            fit_additive(&[("y", &v)], ("y", &v), &cfg).unwrap_err(),
            FitError::TargetAsInput("y".into())
        );
        assert_eq!(
            fit_additive(&[("a", &v), ("a", &v)], ("y", &v), &cfg).unwrap_err(),
            FitError::DuplicateInput("a".into())
        );
        let m = fit_additive(&[("a", &v), ("c", &c)], ("y", &v), &cfg).unwrap();
        assert_eq!(m.diagnostics.skipped_constant, vec!["c".to_string()]);
        let bad = FitConfig {
            holdout_fraction: 1.5,
            ..FitConfig::default()
        };
        assert!(matches!(bad.validate(), Err(FitError::InvalidConfig(_))));
    }
}
