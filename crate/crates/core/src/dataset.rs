//! Tabular datasets: CSV ingestion, column transforms and max-min scaling.
//!
//! A [`Dataset`] is an immutable, rectangular set of named `f64` columns.
//! Transforms never mutate in place; each returns a new dataset with the
//! applied [`TransformSpec`] appended to its history, so a transformed
//! dataset can be rebuilt from its source by replaying that history.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default additive floor for the log transform.
pub const DEFAULT_LOG_FLOOR: f64 = 1e-6;

const NA_TOKENS: [&str; 3] = ["", "NA", "NaN"];

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DatasetError {
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("header is empty")]
    EmptyHeader,

    #[error("column name at position {0} is empty")]
    EmptyColumnName(usize),

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column:?}: missing or non-finite value")]
    MissingValue { row: usize, column: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("dataset has zero data rows")]
    ZeroDataRows,

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("lag {k} must be at least 1 and less than the row count {n}")]
    InvalidLag { k: usize, n: usize },

    #[error("log floor must be finite and non-negative, got {0}")]
    InvalidFloor(f64),

    #[error("log of non-positive value {value} (row {row}, column {column:?})")]
    NonPositiveLog { row: usize, column: String, value: f64 },

    #[error("column {column:?} has length {found}, expected {expected}")]
    LengthMismatch {
        column: String,
        found: usize,
        expected: usize,
    },

    #[error("column {0:?} is constant")]
    ConstantColumn(String),

    #[error("subtract_group_mean needs at least one group_by column")]
    EmptyGroupBy,

    #[error("column {0:?} would be created twice")]
    ColumnExists(String),
}

/// What to do with rows holding an NA token or a non-finite number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaPolicy {
    #[default]
    Reject,
    DropRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub na_policy: NaPolicy,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            na_policy: NaPolicy::Reject,
        }
    }
}

/// Ingestion summary returned next to the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReadReport {
    pub dropped: usize,
}

/// One column transform, serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    Drop {
        column: String,
    },
    Lag {
        column: String,
        k: usize,
    },
    Log {
        column: String,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    SubtractMean {
        column: String,
    },
    SubtractGroupMean {
        column: String,
        group_by: Vec<String>,
    },
}

fn default_floor() -> f64 {
    DEFAULT_LOG_FLOOR
}

impl TransformSpec {
    pub fn column(&self) -> &str {
        match self {
            TransformSpec::Drop { column }
            | TransformSpec::Lag { column, .. }
            | TransformSpec::Log { column, .. }
            | TransformSpec::SubtractMean { column }
            | TransformSpec::SubtractGroupMean { column, .. } => column,
        }
    }

    /// Parses the compact `kind:column[:arg]` form used on the command line,
    /// e.g. `lag:Ux:50`, `log:q5:1e-6`, `subtract_group_mean:p:time,z`.
    pub fn parse_op(op: &str) -> Result<Self, String> {
        let parts: Vec<&str> = op.trim().split(':').map(str::trim).collect();
        let need = |n: usize| -> Result<(), String> {
            if parts.len() == n {
                Ok(())
            } else {
                Err(format!("{op:?}: expected {} fields separated by ':'", n))
            }
        };
        let column = parts
            .get(1)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| format!("{op:?}: missing column"))?
            .to_string();
        match parts[0] {
            "drop" => {
                need(2)?;
                Ok(TransformSpec::Drop { column })
            }
            "lag" => {
                need(3)?;
                let k = parts[2]
                    .parse::<usize>()
                    .map_err(|_| format!("{op:?}: lag must be a positive integer"))?;
                Ok(TransformSpec::Lag { column, k })
            }
            "log" => {
                let floor = match parts.len() {
                    2 => DEFAULT_LOG_FLOOR,
                    3 => parts[2]
                        .parse::<f64>()
                        .map_err(|_| format!("{op:?}: floor must be a number"))?,
                    _ => return Err(format!("{op:?}: expected log:column[:floor]")),
                };
                Ok(TransformSpec::Log { column, floor })
            }
            "subtract_mean" => {
                need(2)?;
                Ok(TransformSpec::SubtractMean { column })
            }
            "subtract_group_mean" => {
                need(3)?;
                let group_by: Vec<String> = parts[2]
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if group_by.is_empty() {
                    return Err(format!("{op:?}: empty group_by list"));
                }
                Ok(TransformSpec::SubtractGroupMean { column, group_by })
            }
            other => Err(format!("unknown transform kind {other:?}")),
        }
    }

    /// Parses a `;`-separated op list. Empty segments are ignored.
    pub fn parse_ops(ops: &str) -> Result<Vec<Self>, String> {
        ops.split(';')
            .filter(|s| !s.trim().is_empty())
            .map(Self::parse_op)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
    history: Vec<TransformSpec>,
}

impl Dataset {
    /// Builds a dataset from named columns, checking the rectangular,
    /// unique-name and finite-value invariants.
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self, DatasetError> {
        let n_rows = columns.first().map(|c| c.1.len()).unwrap_or(0);
        let mut seen = HashSet::new();
        for (i, (name, values)) in columns.iter().enumerate() {
            if name.is_empty() {
                return Err(DatasetError::EmptyColumnName(i));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::DuplicateColumn(name.clone()));
            }
            if values.len() != n_rows {
                return Err(DatasetError::LengthMismatch {
                    column: name.clone(),
                    found: values.len(),
                    expected: n_rows,
                });
            }
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::MissingValue {
                    row,
                    column: name.clone(),
                });
            }
        }
        if columns.is_empty() {
            return Err(DatasetError::EmptyHeader);
        }
        if n_rows == 0 {
            return Err(DatasetError::ZeroDataRows);
        }
        Ok(Self {
            columns: columns
                .into_iter()
                .map(|(name, values)| Column { name, values })
                .collect(),
            n_rows,
            history: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn history(&self) -> &[TransformSpec] {
        &self.history
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64], DatasetError> {
        self.column(name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))
    }

    fn index_of(&self, name: &str) -> Result<usize, DatasetError> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))
    }

    /// Returns a copy with rows in `rows` order (used for splits).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: rows.iter().map(|&r| c.values[r]).collect(),
                })
                .collect(),
            n_rows: rows.len(),
            history: self.history.clone(),
        }
    }

    /// Applies one transform, returning a new dataset.
    pub fn apply(&self, t: &TransformSpec) -> Result<Dataset, DatasetError> {
        let mut out = self.clone();
        match t {
            TransformSpec::Drop { column } => {
                let idx = self.index_of(column)?;
                out.columns.remove(idx);
            }
            TransformSpec::Lag { column, k } => {
                let k = *k;
                let idx = self.index_of(column)?;
                if k == 0 || k >= self.n_rows {
                    return Err(DatasetError::InvalidLag { k, n: self.n_rows });
                }
                let name = format!("{column}_lag{k}");
                if self.column(&name).is_some() {
                    return Err(DatasetError::ColumnExists(name));
                }
                let keep = self.n_rows - k;
                let lagged = self.columns[idx].values[..keep].to_vec();
                for c in &mut out.columns {
                    c.values.drain(..k);
                }
                out.columns.push(Column {
                    name,
                    values: lagged,
                });
                out.n_rows = keep;
            }
            TransformSpec::Log { column, floor } => {
                if !floor.is_finite() || *floor < 0.0 {
                    return Err(DatasetError::InvalidFloor(*floor));
                }
                let idx = self.index_of(column)?;
                let values = &mut out.columns[idx].values;
                for (row, v) in values.iter_mut().enumerate() {
                    let shifted = *v + floor;
                    if shifted <= 0.0 {
                        return Err(DatasetError::NonPositiveLog {
                            row,
                            column: column.clone(),
                            value: *v,
                        });
                    }
                    *v = shifted.log10();
                }
            }
            TransformSpec::SubtractMean { column } => {
                let idx = self.index_of(column)?;
                let values = &mut out.columns[idx].values;
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                for v in values.iter_mut() {
                    *v -= mean;
                }
            }
            TransformSpec::SubtractGroupMean { column, group_by } => {
                if group_by.is_empty() {
                    return Err(DatasetError::EmptyGroupBy);
                }
                let idx = self.index_of(column)?;
                let keys: Vec<&[f64]> = group_by
                    .iter()
                    .map(|g| self.require(g))
                    .collect::<Result<_, _>>()?;
                let key_of = |row: usize| -> Vec<u64> {
                    keys.iter().map(|col| canonical_bits(col[row])).collect()
                };
                let values = &self.columns[idx].values;
                let mut sums: HashMap<Vec<u64>, (f64, usize)> = HashMap::new();
                for (row, v) in values.iter().enumerate() {
                    let e = sums.entry(key_of(row)).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
                let out_values = &mut out.columns[idx].values;
                for (row, v) in out_values.iter_mut().enumerate() {
                    let (s, c) = sums[&key_of(row)];
                    *v -= s / c as f64;
                }
            }
        }
        out.history.push(t.clone());
        Ok(out)
    }

    /// Applies `history` in order to `self`.
    pub fn replay(&self, history: &[TransformSpec]) -> Result<Dataset, DatasetError> {
        history.iter().try_fold(self.clone(), |d, t| d.apply(t))
    }

    /// Writes the dataset as CSV. Values use the shortest representation
    /// that parses back to the identical `f64`.
    pub fn to_csv_string(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        let mut record = Vec::with_capacity(self.columns.len());
        for row in 0..self.n_rows {
            record.clear();
            record.extend(self.columns.iter().map(|c| format!("{}", c.values[row])));
            wtr.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

// -0.0 and 0.0 must land in the same group.
fn canonical_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn is_na(cell: &str) -> bool {
    NA_TOKENS.contains(&cell.trim())
}

/// Reads a CSV file from disk.
pub fn read_csv(path: &Path, options: CsvOptions) -> Result<(Dataset, ReadReport), DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_csv_from(file, options)
}

/// Reads CSV from any reader. Row numbers in errors are 1-based data rows.
pub fn read_csv_from<R: Read>(
    reader: R,
    options: CsvOptions,
) -> Result<(Dataset, ReadReport), DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DatasetError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(DatasetError::EmptyHeader);
    }
    let mut seen = HashSet::new();
    for (i, h) in header.iter().enumerate() {
        if h.is_empty() {
            return Err(DatasetError::EmptyColumnName(i));
        }
        if !seen.insert(h.as_str()) {
            return Err(DatasetError::DuplicateColumn(h.clone()));
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    let mut report = ReadReport::default();
    let mut parsed = Vec::with_capacity(header.len());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DatasetError::Csv(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(DatasetError::RaggedRow {
                row,
                found: rec.len(),
                expected: header.len(),
            });
        }
        parsed.clear();
        let mut missing: Option<usize> = None;
        for (j, cell) in rec.iter().enumerate() {
            if is_na(cell) {
                missing.get_or_insert(j);
                parsed.push(f64::NAN);
                continue;
            }
            let v = cell
                .trim()
                .parse::<f64>()
                .map_err(|_| DatasetError::NonNumeric {
                    row,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
            if !v.is_finite() {
                missing.get_or_insert(j);
            }
            parsed.push(v);
        }
        if let Some(j) = missing {
            match options.na_policy {
                NaPolicy::Reject => {
                    return Err(DatasetError::MissingValue {
                        row,
                        column: header[j].clone(),
                    })
                }
                NaPolicy::DropRows => {
                    report.dropped += 1;
                    continue;
                }
            }
        }
        for (col, v) in columns.iter_mut().zip(&parsed) {
            col.push(*v);
        }
    }
    if columns[0].is_empty() {
        return Err(DatasetError::ZeroDataRows);
    }
    let ds = Dataset::new(header.into_iter().zip(columns).collect())?;
    Ok((ds, report))
}

/// Max-min scaled values with the original range kept for inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedColumn {
    pub values: Vec<f64>,
    pub original_min: f64,
    pub original_max: f64,
}

impl NormalizedColumn {
    pub fn denormalize(&self, u: f64) -> f64 {
        self.original_min + u * (self.original_max - self.original_min)
    }
}

/// Min and max of a column, or `None` for an empty or constant column.
pub fn value_range(values: &[f64]) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    (hi > lo).then_some((lo, hi))
}

/// Maps values onto [0,1]: min to 0, max to 1.
pub fn normalize_minmax(values: &[f64]) -> Result<NormalizedColumn, DatasetError> {
    let (lo, hi) = value_range(values).ok_or_else(|| DatasetError::ConstantColumn(String::new()))?;
    let span = hi - lo;
    Ok(NormalizedColumn {
        values: values.iter().map(|v| (v - lo) / span).collect(),
        original_min: lo,
        original_max: hi,
    })
}
