//! Association matrices: pairwise spline fits (PKAN), per-target additive
//! fits (MKAN), and the Pearson and NMI baselines.
//!
//! Rows are targets and columns are inputs. Every cell is an independent job
//! whose RNG derives from `(seed, row, col)`, so cells are computed in
//! parallel without affecting the result.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::additive::{fit_additive, fit_pairwise, model_split, EdgeModel, FitConfig, FitError, MIN_ROWS};
use crate::dataset::{value_range, Dataset};
use crate::rng::gather;
use crate::scoring::{default_bins, mutual_information, pearson, strength, ScoreError};

pub const DEFAULT_CURVE_POINTS: usize = 64;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MatrixError {
    #[error("need at least 2 columns, got {0}")]
    TooFewColumns(usize),
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("invalid matrix config: {0}")]
    InvalidConfig(String),
    #[error("{kind:?} is not a baseline method")]
    NotBaseline { kind: MatrixKind },
    #[error("fit for target {row:?} failed: {source}")]
    Fit {
        row: String,
        #[source]
        source: FitError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Pkan,
    Mkan,
    Pearson,
    Nmi,
}

impl MatrixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::Pkan => "pkan",
            MatrixKind::Mkan => "mkan",
            MatrixKind::Pearson => "pearson",
            MatrixKind::Nmi => "nmi",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, MatrixKind::Pearson | MatrixKind::Nmi)
    }
}

impl std::str::FromStr for MatrixKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pkan" => Ok(MatrixKind::Pkan),
            "mkan" => Ok(MatrixKind::Mkan),
            "pearson" => Ok(MatrixKind::Pearson),
            "nmi" => Ok(MatrixKind::Nmi),
            other => Err(format!("unknown matrix kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    Diagonal,
    ConstantInput,
    ConstantTarget,
    Pruned,
    Degenerate,
    MetricUndefined,
    NotInput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellRaw {
    /// Unclipped test skill (PKAN cell or MKAN row model).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
    /// Signed Pearson coefficient.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi_symmetric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi_by_input: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi_by_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_max: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<CellFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub row: String,
    pub col: String,
    pub strength: f64,
    /// `(u, v)` points: `u` in [0, 1] strictly increasing, `v` in target units.
    pub curve: Option<Vec<[f64; 2]>>,
    pub raw: CellRaw,
}

impl MatrixCell {
    fn empty(row: &str, col: &str, flag: CellFlag) -> Self {
        Self {
            row: row.to_string(),
            col: col.to_string(),
            strength: 0.0,
            curve: None,
            raw: CellRaw {
                flags: vec![flag],
                ..CellRaw::default()
            },
        }
    }

    pub fn has_flag(&self, flag: CellFlag) -> bool {
        self.raw.flags.contains(&flag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixConfig {
    pub fit: FitConfig,
    pub curve_points: usize,
    /// Histogram bins for NMI; `None` uses [`default_bins`].
    pub mi_bins: Option<usize>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            curve_points: DEFAULT_CURVE_POINTS,
            mi_bins: None,
        }
    }
}

impl MatrixConfig {
    pub fn validate(&self) -> Result<(), MatrixError> {
        self.fit
            .validate()
            .map_err(|e| MatrixError::InvalidConfig(e.to_string()))?;
        if self.curve_points < 2 {
            return Err(MatrixError::InvalidConfig(format!(
                "curve_points {} must be >= 2",
                self.curve_points
            )));
        }
        if self.mi_bins == Some(0) {
            return Err(MatrixError::InvalidConfig("mi_bins must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which rows to build and which columns may act as inputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixRequest {
    /// Target rows; `None` means every label.
    pub targets: Option<Vec<String>>,
    pub excluded_targets: Vec<String>,
    /// Columns allowed as inputs; `None` means every other label.
    pub inputs: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationMatrix {
    pub kind: MatrixKind,
    pub labels: Vec<String>,
    pub excluded_targets: Vec<String>,
    pub seed: u64,
    pub config: MatrixConfig,
    /// Row-major over [`Self::row_labels`] × `labels`.
    pub cells: Vec<MatrixCell>,
}

impl AssociationMatrix {
    pub fn cell(&self, row: &str, col: &str) -> Option<&MatrixCell> {
        self.cells.iter().find(|c| c.row == row && c.col == col)
    }

    pub fn strength(&self, row: &str, col: &str) -> Option<f64> {
        self.cell(row, col).map(|c| c.strength)
    }

    /// Labels that have a row, in label order.
    pub fn row_labels(&self) -> Vec<String> {
        let mut rows: Vec<String> = Vec::new();
        for c in &self.cells {
            if rows.last() != Some(&c.row) {
                rows.push(c.row.clone());
            }
        }
        rows
    }

    pub fn row(&self, row: &str) -> Vec<&MatrixCell> {
        self.cells.iter().filter(|c| c.row == row).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub u: Vec<f64>,
    /// Denormalized input positions of `u`.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl SampledCurve {
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.u.iter().zip(&self.v).map(|(&u, &v)| [u, v]).collect()
    }
}

fn grid(m: usize) -> Vec<f64> {
    let m = m.max(2);
    (0..m)
        .map(|k| if k == m - 1 { 1.0 } else { k as f64 / (m - 1) as f64 })
        .collect()
}

/// φ at `m` equally spaced normalized positions (`m` is raised to 2 if smaller).
pub fn sample_curve(edge: &EdgeModel, m: usize) -> SampledCurve {
    let u = grid(m);
    let span = edge.input_max - edge.input_min;
    SampledCurve {
        x: u.iter().map(|u| edge.input_min + u * span).collect(),
        v: u.iter().map(|&u| edge.eval_normalized(u)).collect(),
        u,
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile-paired `(normalized observed, predicted)` points; repeated
/// observed quantiles keep their first pair.
fn quantile_curve(obs: &[f64], pred: &[f64], m: usize) -> Option<Vec<[f64; 2]>> {
    let (lo, hi) = value_range(obs)?;
    let mut so = obs.to_vec();
    let mut sp = pred.to_vec();
    so.sort_by(f64::total_cmp);
    sp.sort_by(f64::total_cmp);
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(m);
    for p in grid(m) {
        let u = ((quantile(&so, p) - lo) / (hi - lo)).clamp(0.0, 1.0);
        if out.last().is_none_or(|last| u > last[0]) {
            out.push([u, quantile(&sp, p)]);
        }
    }
    Some(out)
}

fn identity_curve(values: &[f64], m: usize) -> Vec<[f64; 2]> {
    let (lo, hi) = value_range(values).unwrap_or((values[0], values[0]));
    grid(m).into_iter().map(|u| [u, lo + u * (hi - lo)]).collect()
}

/// Progress callback: `(finished jobs, total jobs)`.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

struct Plan {
    labels: Vec<String>,
    rows: Vec<String>,
    inputs: BTreeSet<String>,
    excluded: Vec<String>,
}

fn plan(d: &Dataset, req: &MatrixRequest, min_rows: usize) -> Result<Plan, MatrixError> {
    let labels = d.names();
    if labels.len() < 2 {
        return Err(MatrixError::TooFewColumns(labels.len()));
    }
    if d.n_rows() < min_rows {
        return Err(MatrixError::TooFewRows {
            need: min_rows,
            got: d.n_rows(),
        });
    }
    let known = |names: &[String]| -> Result<(), MatrixError> {
        match names.iter().find(|n| !labels.contains(n)) {
            Some(n) => Err(MatrixError::UnknownColumn(n.clone())),
            None => Ok(()),
        }
    };
    known(&req.excluded_targets)?;
    let targets: BTreeSet<&String> = match &req.targets {
        Some(t) => {
            known(t)?;
            t.iter().collect()
        }
        None => labels.iter().collect(),
    };
    let inputs = match &req.inputs {
        Some(i) => {
            known(i)?;
            i.iter().cloned().collect()
        }
        None => labels.iter().cloned().collect(),
    };
    let rows = labels
        .iter()
        .filter(|l| targets.contains(l) && !req.excluded_targets.contains(l))
        .cloned()
        .collect();
    let mut excluded: Vec<String> = req.excluded_targets.clone();
    excluded.sort();
    excluded.dedup();
    Ok(Plan {
        labels,
        rows,
        inputs,
        excluded,
    })
}

fn assemble(kind: MatrixKind, p: Plan, cfg: &MatrixConfig, cells: Vec<MatrixCell>) -> AssociationMatrix {
    AssociationMatrix {
        kind,
        labels: p.labels,
        excluded_targets: p.excluded,
        seed: cfg.fit.seed,
        config: cfg.clone(),
        cells,
    }
}

struct Counter<'a> {
    done: AtomicUsize,
    total: usize,
    progress: Option<Progress<'a>>,
}

impl<'a> Counter<'a> {
    fn new(total: usize, progress: Option<Progress<'a>>) -> Self {
        Self {
            done: AtomicUsize::new(0),
            total,
            progress,
        }
    }

    fn tick(&self) {
        let done = self.done.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(f) = self.progress {
            f(done, self.total);
        }
    }
}

/// Builds any matrix kind.
pub fn compute(
    d: &Dataset,
    kind: MatrixKind,
    req: &MatrixRequest,
    cfg: &MatrixConfig,
    progress: Option<Progress<'_>>,
) -> Result<AssociationMatrix, MatrixError> {
    cfg.validate()?;
    match kind {
        MatrixKind::Pkan => pkan(d, req, cfg, progress),
        MatrixKind::Mkan => mkan(d, req, cfg, progress),
        MatrixKind::Pearson | MatrixKind::Nmi => baseline(d, kind, req, cfg, progress),
    }
}

pub fn compute_pkan(d: &Dataset, cfg: &MatrixConfig) -> Result<AssociationMatrix, MatrixError> {
    compute(d, MatrixKind::Pkan, &MatrixRequest::default(), cfg, None)
}

pub fn compute_mkan(
    d: &Dataset,
    targets: Option<&[String]>,
    excluded_targets: &[String],
    cfg: &MatrixConfig,
) -> Result<AssociationMatrix, MatrixError> {
    let req = MatrixRequest {
        targets: targets.map(<[String]>::to_vec),
        excluded_targets: excluded_targets.to_vec(),
        inputs: None,
    };
    compute(d, MatrixKind::Mkan, &req, cfg, None)
}

pub fn compute_baseline(
    d: &Dataset,
    method: MatrixKind,
    cfg: &MatrixConfig,
) -> Result<AssociationMatrix, MatrixError> {
    if !method.is_baseline() {
        return Err(MatrixError::NotBaseline { kind: method });
    }
    compute(d, method, &MatrixRequest::default(), cfg, None)
}

fn column<'a>(d: &'a Dataset, name: &str) -> &'a [f64] {
    d.column(name).expect("planned labels exist")
}

fn pkan(
    d: &Dataset,
    req: &MatrixRequest,
    cfg: &MatrixConfig,
    progress: Option<Progress<'_>>,
) -> Result<AssociationMatrix, MatrixError> {
    let p = plan(d, req, MIN_ROWS)?;
    let jobs: Vec<(&String, &String)> = p
        .rows
        .iter()
        .flat_map(|r| p.labels.iter().map(move |c| (r, c)))
        .collect();
    let counter = Counter::new(jobs.len(), progress);
    let cells = jobs
        .par_iter()
        .map(|&(row, col)| {
            let cell = pkan_cell(d, row, col, &p.inputs, cfg);
            counter.tick();
            cell
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(MatrixKind::Pkan, p, cfg, cells))
}

fn pkan_cell(
    d: &Dataset,
    row: &str,
    col: &str,
    inputs: &BTreeSet<String>,
    cfg: &MatrixConfig,
) -> Result<MatrixCell, MatrixError> {
    let y = column(d, row);
    if row == col {
        let mut cell = MatrixCell::empty(row, col, CellFlag::Diagonal);
        cell.strength = 1.0;
        cell.curve = Some(identity_curve(y, cfg.curve_points));
        return Ok(cell);
    }
    if !inputs.contains(col) {
        return Ok(MatrixCell::empty(row, col, CellFlag::NotInput));
    }
    match fit_pairwise((col, column(d, col)), (row, y), &cfg.fit) {
        Ok((edge, diag)) => Ok(MatrixCell {
            row: row.to_string(),
            col: col.to_string(),
            strength: diag.test_metric.clipped,
            curve: Some(sample_curve(&edge, cfg.curve_points).points()),
            raw: CellRaw {
                metric: Some(diag.test_metric.value),
                share: Some(1.0),
                input_min: Some(edge.input_min),
                input_max: Some(edge.input_max),
                ..CellRaw::default()
            },
        }),
        Err(FitError::ConstantInput(_)) => Ok(MatrixCell::empty(row, col, CellFlag::ConstantInput)),
        Err(FitError::ConstantTarget(_)) => Ok(MatrixCell::empty(row, col, CellFlag::ConstantTarget)),
        Err(FitError::Metric(_)) => Ok(MatrixCell::empty(row, col, CellFlag::MetricUndefined)),
        Err(source) => Err(MatrixError::Fit {
            row: row.to_string(),
            source,
        }),
    }
}

fn mkan(
    d: &Dataset,
    req: &MatrixRequest,
    cfg: &MatrixConfig,
    progress: Option<Progress<'_>>,
) -> Result<AssociationMatrix, MatrixError> {
    let p = plan(d, req, MIN_ROWS)?;
    let counter = Counter::new(p.rows.len(), progress);
    let rows = p
        .rows
        .par_iter()
        .map(|row| {
            let cells = mkan_row(d, row, &p.labels, &p.inputs, cfg);
            counter.tick();
            cells
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cells = rows.into_iter().flatten().collect();
    Ok(assemble(MatrixKind::Mkan, p, cfg, cells))
}

fn flat_row(row: &str, labels: &[String], flag: CellFlag) -> Vec<MatrixCell> {
    labels.iter().map(|c| MatrixCell::empty(row, c, flag)).collect()
}

fn mkan_row(
    d: &Dataset,
    row: &str,
    labels: &[String],
    allowed: &BTreeSet<String>,
    cfg: &MatrixConfig,
) -> Result<Vec<MatrixCell>, MatrixError> {
    let y = column(d, row);
    let inputs: Vec<(&str, &[f64])> = labels
        .iter()
        .filter(|c| c.as_str() != row && allowed.contains(*c))
        .map(|c| (c.as_str(), column(d, c)))
        .collect();
    if inputs.is_empty() {
        return Ok(flat_row(row, labels, CellFlag::NotInput));
    }
    let model = match fit_additive(&inputs, (row, y), &cfg.fit) {
        Ok(m) => m,
        Err(FitError::ConstantTarget(_)) => return Ok(flat_row(row, labels, CellFlag::ConstantTarget)),
        Err(FitError::AllInputsConstant) => return Ok(flat_row(row, labels, CellFlag::ConstantInput)),
        Err(FitError::Metric(_)) => return Ok(flat_row(row, labels, CellFlag::MetricUndefined)),
        Err(source) => {
            return Err(MatrixError::Fit {
                row: row.to_string(),
                source,
            })
        }
    };
    let (_, test) = model_split(&model, y.len());
    let test_cols: Vec<(String, Vec<f64>)> = inputs
        .iter()
        .map(|(n, v)| (n.to_string(), gather(v, &test)))
        .collect();
    let test_refs: Vec<(&str, &[f64])> = test_cols.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    let scored = match strength(&model, &test_refs, &gather(y, &test), cfg.fit.metric) {
        Ok(s) => s,
        Err(ScoreError::ConstantColumn | ScoreError::ZeroMeanObs) => {
            return Ok(flat_row(row, labels, CellFlag::MetricUndefined))
        }
        Err(e) => {
            return Err(MatrixError::Fit {
                row: row.to_string(),
                source: FitError::Metric(e),
            })
        }
    };
    let degenerate = scored.attribution.degenerate;
    let m = cfg.curve_points;
    let mut cells = Vec::with_capacity(labels.len());
    for col in labels {
        let mut cell = MatrixCell::empty(row, col, CellFlag::Diagonal);
        cell.raw.flags.clear();
        cell.raw.metric = Some(scored.skill.value);
        if col == row {
            let pred = model
                .predict(&inputs)
                .map_err(|source| MatrixError::Fit {
                    row: row.to_string(),
                    source,
                })?;
            cell.strength = scored.skill.clipped;
            cell.curve = quantile_curve(y, &pred, m);
            cell.raw.flags.push(CellFlag::Diagonal);
        } else if !allowed.contains(col) {
            cell.raw.metric = None;
            cell.raw.flags.push(CellFlag::NotInput);
        } else if let Some(j) = scored.names.iter().position(|n| n == col) {
            let edge = &model.edges[j];
            cell.strength = scored.strengths[j];
            cell.curve = Some(sample_curve(edge, m).points());
            cell.raw.share = Some(scored.attribution.normalized[j]);
            cell.raw.input_min = Some(edge.input_min);
            cell.raw.input_max = Some(edge.input_max);
            if degenerate {
                cell.raw.flags.push(CellFlag::Degenerate);
            }
        } else {
            let flag = if model.diagnostics.skipped_constant.contains(col) {
                CellFlag::ConstantInput
            } else {
                CellFlag::Pruned
            };
            cell.raw.share = Some(0.0);
            cell.curve = Some(grid(m).into_iter().map(|u| [u, 0.0]).collect());
            if let Some((lo, hi)) = value_range(column(d, col)) {
                cell.raw.input_min = Some(lo);
                cell.raw.input_max = Some(hi);
            }
            cell.raw.flags.push(flag);
        }
        cells.push(cell);
    }
    Ok(cells)
}

fn baseline(
    d: &Dataset,
    kind: MatrixKind,
    req: &MatrixRequest,
    cfg: &MatrixConfig,
    progress: Option<Progress<'_>>,
) -> Result<AssociationMatrix, MatrixError> {
    let p = plan(d, req, 2)?;
    let bins = cfg.mi_bins.unwrap_or_else(|| default_bins(d.n_rows()));
    let jobs: Vec<(&String, &String)> = p
        .rows
        .iter()
        .flat_map(|r| p.labels.iter().map(move |c| (r, c)))
        .collect();
    let counter = Counter::new(jobs.len(), progress);
    let cells = jobs
        .par_iter()
        .map(|&(row, col)| {
            let cell = baseline_cell(d, kind, row, col, &p.inputs, bins);
            counter.tick();
            cell
        })
        .collect();
    Ok(assemble(kind, p, cfg, cells))
}

fn constant_flag(d: &Dataset, col: &str) -> CellFlag {
    if value_range(column(d, col)).is_none() {
        CellFlag::ConstantInput
    } else {
        CellFlag::ConstantTarget
    }
}

fn baseline_cell(
    d: &Dataset,
    kind: MatrixKind,
    row: &str,
    col: &str,
    inputs: &BTreeSet<String>,
    bins: usize,
) -> MatrixCell {
    if row != col && !inputs.contains(col) {
        return MatrixCell::empty(row, col, CellFlag::NotInput);
    }
    let (x, y) = (column(d, col), column(d, row));
    let mut cell = match kind {
        MatrixKind::Pearson => match pearson(x, y) {
            Ok(r) => MatrixCell {
                row: row.to_string(),
                col: col.to_string(),
                strength: r.abs().min(1.0),
                curve: None,
                raw: CellRaw {
                    r: Some(r),
                    ..CellRaw::default()
                },
            },
            Err(_) => MatrixCell::empty(row, col, constant_flag(d, col)),
        },
        _ => {
            let mi = mutual_information(x, y, bins).expect("matrix columns share one length");
            if value_range(x).is_none() || value_range(y).is_none() {
                MatrixCell::empty(row, col, constant_flag(d, col))
            } else {
                MatrixCell {
                    row: row.to_string(),
                    col: col.to_string(),
                    strength: mi.nmi_symmetric.clamp(0.0, 1.0),
                    curve: None,
                    raw: CellRaw {
                        nmi_symmetric: Some(mi.nmi_symmetric),
                        nmi_by_input: Some(mi.nmi_by_input),
                        nmi_by_target: Some(mi.nmi_by_target),
                        ..CellRaw::default()
                    },
                }
            }
        }
    };
    if row == col {
        cell.raw.flags.insert(0, CellFlag::Diagonal);
    }
    cell
}
