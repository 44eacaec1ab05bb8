//! Multi-target feature ranking and top-k forest evaluation.
//!
//! A ranking averages per-target association strengths of every candidate
//! input (all non-target columns). [`evaluate_topk`] then trains one
//! multi-output forest per `k` on the `k` best inputs and scores it on a
//! holdout split that depends only on the seed, so different rankings are
//! compared on the same rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::forest::{fit_random_forest, ForestError, ForestParams};
use crate::matrix::{compute, AssociationMatrix, MatrixCell, MatrixConfig, MatrixError, MatrixKind, MatrixRequest};
use crate::rng::{derive_seed, gather, holdout_split};
use crate::scoring::nse;

pub const DEFAULT_TOPK_HOLDOUT: f64 = 0.2;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum RankingError {
    #[error("no targets given")]
    NoTargets,
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("no candidate inputs remain after removing targets")]
    NoInputs,
    #[error("k = {k} exceeds the {available} ranked inputs")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("target {0:?} is constant")]
    ConstantTarget(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub method: String,
    pub targets: Vec<String>,
    /// Input → strengths in `targets` order.
    pub per_target_strengths: BTreeMap<String, Vec<f64>>,
    pub average: BTreeMap<String, f64>,
    /// Inputs by descending average, ties by name.
    pub order: Vec<String>,
    /// Target → sum of strengths over inputs.
    pub per_target_totals: BTreeMap<String, f64>,
}

impl RankingReport {
    pub fn top(&self, k: usize) -> &[String] {
        &self.order[..k.min(self.order.len())]
    }

    pub fn reversed(&self) -> RankingReport {
        let mut r = self.clone();
        r.order.reverse();
        r.method = format!("{}_reversed", self.method);
        r
    }
}

fn split_columns(d: &Dataset, targets: &[String]) -> Result<Vec<String>, RankingError> {
    if targets.is_empty() {
        return Err(RankingError::NoTargets);
    }
    if let Some(t) = targets.iter().find(|t| d.column(t).is_none()) {
        return Err(RankingError::UnknownColumn(t.clone()));
    }
    let inputs: Vec<String> = d.names().into_iter().filter(|n| !targets.contains(n)).collect();
    if inputs.is_empty() {
        return Err(RankingError::NoInputs);
    }
    Ok(inputs)
}

/// Builds a report from any matrix whose rows include `targets`, scoring
/// each (target, input) cell with `score`.
pub fn ranking_from_matrix(
    method: &str,
    m: &AssociationMatrix,
    targets: &[String],
    inputs: &[String],
    score: impl Fn(&MatrixCell) -> f64,
) -> RankingReport {
    let mut per_target_strengths = BTreeMap::new();
    let mut average = BTreeMap::new();
    for input in inputs {
        let s: Vec<f64> = targets
            .iter()
            .map(|t| m.cell(t, input).map_or(0.0, &score))
            .collect();
        average.insert(input.clone(), s.iter().sum::<f64>() / s.len() as f64);
        per_target_strengths.insert(input.clone(), s);
    }
    let per_target_totals = targets
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), per_target_strengths.values().map(|s| s[i]).sum()))
        .collect();
    let mut order: Vec<String> = inputs.to_vec();
    order.sort_by(|a, b| average[b].total_cmp(&average[a]).then_with(|| a.cmp(b)));
    RankingReport {
        method: method.to_string(),
        targets: targets.to_vec(),
        per_target_strengths,
        average,
        order,
        per_target_totals,
    }
}

fn restricted(
    d: &Dataset,
    kind: MatrixKind,
    targets: &[String],
    cfg: &MatrixConfig,
) -> Result<(AssociationMatrix, Vec<String>), RankingError> {
    let inputs = split_columns(d, targets)?;
    let req = MatrixRequest {
        targets: Some(targets.to_vec()),
        excluded_targets: vec![],
        inputs: Some(inputs.clone()),
    };
    Ok((compute(d, kind, &req, cfg, None)?, inputs))
}

/// MKAN ranking: one additive model per target over the non-target columns.
pub fn multi_target_ranking(
    d: &Dataset,
    targets: &[String],
    cfg: &MatrixConfig,
) -> Result<RankingReport, RankingError> {
    let (m, inputs) = restricted(d, MatrixKind::Mkan, targets, cfg)?;
    Ok(ranking_from_matrix("mkan", &m, targets, &inputs, |c| c.strength))
}

/// Ranking by `|r|` (Pearson) or symmetric NMI per (target, input).
pub fn rank_by_baseline(
    d: &Dataset,
    targets: &[String],
    method: MatrixKind,
    cfg: &MatrixConfig,
) -> Result<RankingReport, RankingError> {
    if !method.is_baseline() {
        return Err(MatrixError::NotBaseline { kind: method }.into());
    }
    let (m, inputs) = restricted(d, method, targets, cfg)?;
    Ok(ranking_from_matrix(method.as_str(), &m, targets, &inputs, |c| c.strength))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub k: usize,
    pub inputs: Vec<String>,
    /// Test NSE per target, in `TopKTable::targets` order.
    pub per_target: Vec<f64>,
    pub mean: f64,
    /// NSE over all outputs stacked, around their common mean.
    pub pooled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKTable {
    pub method: String,
    pub targets: Vec<String>,
    pub rows: Vec<TopKRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopKConfig {
    pub forest: ForestParams,
    pub holdout_fraction: f64,
}

impl Default for TopKConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            holdout_fraction: DEFAULT_TOPK_HOLDOUT,
        }
    }
}

/// Rows used for top-k training and testing; depends only on `n` and the seed.
pub fn topk_split(n: usize, cfg: &TopKConfig) -> (Vec<usize>, Vec<usize>) {
    holdout_split(n, cfg.holdout_fraction, derive_seed(cfg.forest.seed, &["topk"]))
}

/// For each `k`, a multi-output forest on the top `k` inputs of `ranking`
/// predicting all `targets` jointly, scored on the shared holdout rows.
pub fn evaluate_topk(
    d: &Dataset,
    ranking: &RankingReport,
    targets: &[String],
    ks: &[usize],
    cfg: &TopKConfig,
) -> Result<TopKTable, RankingError> {
    if targets.is_empty() {
        return Err(RankingError::NoTargets);
    }
    for &k in ks {
        if k == 0 {
            return Err(RankingError::ZeroK);
        }
        if k > ranking.order.len() {
            return Err(RankingError::KTooLarge {
                k,
                available: ranking.order.len(),
            });
        }
    }
    let col = |name: &String| d.column(name).ok_or_else(|| RankingError::UnknownColumn(name.clone()));
    let (train, test) = topk_split(d.n_rows(), cfg);
    let y_train: Vec<Vec<f64>> = targets.iter().map(|t| Ok(gather(col(t)?, &train))).collect::<Result<_, RankingError>>()?;
    let y_test: Vec<Vec<f64>> = targets.iter().map(|t| Ok(gather(col(t)?, &test))).collect::<Result<_, RankingError>>()?;
    let y_refs: Vec<&[f64]> = y_train.iter().map(Vec::as_slice).collect();
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        // canonical column order, so equal input sets train identical forests
        let mut inputs = ranking.top(k).to_vec();
        inputs.sort();
        let x_train: Vec<Vec<f64>> = inputs.iter().map(|i| Ok(gather(col(i)?, &train))).collect::<Result<_, RankingError>>()?;
        let x_test: Vec<Vec<f64>> = inputs.iter().map(|i| Ok(gather(col(i)?, &test))).collect::<Result<_, RankingError>>()?;
        let xr: Vec<&[f64]> = x_train.iter().map(Vec::as_slice).collect();
        let forest = fit_random_forest(&xr, &y_refs, &cfg.forest)?;
        let xs: Vec<&[f64]> = x_test.iter().map(Vec::as_slice).collect();
        let pred = forest.predict(&xs)?;
        let per_target = targets
            .iter()
            .zip(y_test.iter().zip(&pred))
            .map(|(t, (obs, p))| nse(obs, p).map_err(|_| RankingError::ConstantTarget(t.clone())))
            .collect::<Result<Vec<f64>, _>>()?;
        let obs_all: Vec<f64> = y_test.concat();
        let pred_all: Vec<f64> = pred.concat();
        rows.push(TopKRow {
            k,
            inputs,
            mean: per_target.iter().sum::<f64>() / per_target.len() as f64,
            per_target,
            pooled: nse(&obs_all, &pred_all).map_err(|_| RankingError::ConstantTarget(targets.join(",")))?,
        });
    }
    Ok(TopKTable {
        method: ranking.method.clone(),
        targets: targets.to_vec(),
        rows,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `attribute,<targets...>,average,ranking` with inputs in rank order.
pub fn ranking_csv(r: &RankingReport) -> String {
    let mut out = String::from("attribute");
    for t in &r.targets {
        out.push(',');
        out.push_str(&csv_field(t));
    }
    out.push_str(",average,ranking\n");
    for (rank, input) in r.order.iter().enumerate() {
        out.push_str(&csv_field(input));
        for s in &r.per_target_strengths[input] {
            out.push_str(&format!(",{s:.3}"));
        }
        out.push_str(&format!(",{:.3},{}\n", r.average[input], rank + 1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Mean,
    Pooled,
}

/// One row per method, one column per `k`: `method,top_2,top_4,...`.
pub fn topk_csv(tables: &[TopKTable], aggregate: Aggregate) -> String {
    let mut out = String::from("method");
    if let Some(first) = tables.first() {
        for row in &first.rows {
            out.push_str(&format!(",top_{}", row.k));
        }
    }
    out.push('\n');
    for t in tables {
        out.push_str(&csv_field(&t.method));
        for row in &t.rows {
            let v = match aggregate {
                Aggregate::Mean => row.mean,
                Aggregate::Pooled => row.pooled,
            };
            out.push_str(&format!(",{v:.3}"));
        }
        out.push('\n');
    }
    out
}
