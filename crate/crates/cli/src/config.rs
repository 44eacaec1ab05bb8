//! Global settings: defaults, then an optional JSON file, then flags.

use std::path::Path;

use kanmat_core::matrix::MatrixConfig;
use kanmat_core::ranking::TopKConfig;
use kanmat_core::render::RenderStyle;
use kanmat_core::scoring::MetricKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub matrix: MatrixConfig,
    pub topk: TopKConfig,
    pub style: RenderStyle,
}

/// Flag values that override the file. `None` leaves the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub metric: Option<MetricKind>,
    pub grid: Option<usize>,
    pub degree: Option<usize>,
    pub lambda: Option<f64>,
    pub prune_tau: Option<f64>,
    pub holdout: Option<f64>,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        let fit = &mut self.matrix.fit;
        if let Some(seed) = o.seed {
            fit.seed = seed;
            self.topk.forest.seed = seed;
        }
        if let Some(metric) = o.metric {
            fit.metric = metric;
        }
        if let Some(g) = o.grid {
            fit.n_intervals = g;
        }
        if let Some(p) = o.degree {
            fit.degree = p;
        }
        if let Some(l) = o.lambda {
            fit.ridge_lambda = l;
        }
        if let Some(t) = o.prune_tau {
            fit.prune_threshold = t;
        }
        if let Some(h) = o.holdout {
            fit.holdout_fraction = h;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.matrix.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.topk.forest.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if !(self.topk.holdout_fraction > 0.0 && self.topk.holdout_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "topk.holdout_fraction {} must be in (0, 1)",
                self.topk.holdout_fraction
            )));
        }
        self.style.validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}
