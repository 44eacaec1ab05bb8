//! Multi-output random forest regressor.
//!
//! Trees split on one feature at a time, choosing the threshold that
//! minimizes the summed within-child squared error over all outputs. Leaves
//! store the mean output vector of their training rows.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, rng_from};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ForestError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("need at least one {0} column")]
    NoColumns(&'static str),
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid forest parameter: {0}")]
    InvalidParams(String),
    #[error("expected {expected} feature columns, got {got}")]
    FeatureCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features_fraction: f64,
    pub max_samples_fraction: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            min_samples_split: 4,
            min_samples_leaf: 3,
            max_features_fraction: 0.7,
            max_samples_fraction: 0.7,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::InvalidParams(m));
        if self.n_estimators == 0 || self.min_samples_split == 0 || self.min_samples_leaf == 0 {
            return bad("counts must be >= 1".into());
        }
        for (name, f) in [
            ("max_features_fraction", self.max_features_fraction),
            ("max_samples_fraction", self.max_samples_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("{name} {f} must be in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: Vec<f64>,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
    /// Training rows drawn for this tree (with repeats when bootstrapping).
    pub rows: Vec<usize>,
    pub seed: u64,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, n_samples } => Some((value.as_slice(), *n_samples)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub n_features: usize,
    pub n_outputs: usize,
}

struct Training<'a> {
    x: &'a [&'a [f64]],
    y: &'a [&'a [f64]],
    params: &'a ForestParams,
    n_try: usize,
}

fn check_columns(cols: &[&[f64]], what: &'static str) -> Result<usize, ForestError> {
    let n = cols.first().ok_or(ForestError::NoColumns(what))?.len();
    for c in cols {
        if c.len() != n {
            return Err(ForestError::LengthMismatch(n, c.len()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite);
        }
    }
    Ok(n)
}

/// Trains `params.n_estimators` trees on feature columns `x` and output
/// columns `y`. Tree `t` uses an RNG seeded from `(seed, t)`.
pub fn fit_random_forest(
    x: &[&[f64]],
    y: &[&[f64]],
    params: &ForestParams,
) -> Result<Forest, ForestError> {
    params.validate()?;
    let n = check_columns(x, "feature")?;
    let ny = check_columns(y, "output")?;
    if n != ny {
        return Err(ForestError::LengthMismatch(n, ny));
    }
    let need = 2 * params.min_samples_split;
    if n < need {
        return Err(ForestError::TooFewRows { need, got: n });
    }
    let m = x.len();
    let training = Training {
        x,
        y,
        params,
        n_try: ((params.max_features_fraction * m as f64).ceil() as usize).clamp(1, m),
    };
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| training.tree(derive_seed(params.seed, &["tree", &t.to_string()])))
        .collect();
    Ok(Forest {
        trees,
        params: params.clone(),
        n_features: m,
        n_outputs: y.len(),
    })
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    cost: f64,
    n_left: usize,
}

impl Training<'_> {
    fn tree(&self, seed: u64) -> Tree {
        let mut rng = rng_from(seed);
        let n = self.x[0].len();
        let draw = ((self.params.max_samples_fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut rows: Vec<usize> = if self.params.bootstrap {
            (0..draw).map(|_| rng.random_range(0..n)).collect()
        } else {
            index::sample(&mut rng, n, draw).into_vec()
        };
        rows.sort_unstable();
        let mut nodes = Vec::new();
        let mut work = rows.clone();
        self.grow(&mut work, &mut nodes, &mut rng);
        Tree { nodes, rows, seed }
    }

    fn leaf(&self, rows: &[usize]) -> Node {
        let value = self
            .y
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).sum::<f64>() / rows.len() as f64)
            .collect();
        Node::Leaf {
            value,
            n_samples: rows.len(),
        }
    }

    fn sse(&self, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        self.y
            .iter()
            .map(|col| {
                let mean = rows.iter().map(|&r| col[r]).sum::<f64>() / n;
                rows.iter().map(|&r| (col[r] - mean).powi(2)).sum::<f64>()
            })
            .sum()
    }

    /// Appends the subtree for `rows` to `nodes` and returns its index.
    fn grow(&self, rows: &mut [usize], nodes: &mut Vec<Node>, rng: &mut impl Rng) -> usize {
        let id = nodes.len();
        let p = self.params;
        if rows.len() < p.min_samples_split || rows.len() < 2 * p.min_samples_leaf {
            nodes.push(self.leaf(rows));
            return id;
        }
        let parent = self.sse(rows);
        let best = if parent > 0.0 { self.best_split(rows, rng) } else { None };
        let Some(best) = best.filter(|b| b.cost < parent * (1.0 - 1e-12)) else {
            nodes.push(self.leaf(rows));
            return id;
        };
        let xf = self.x[best.feature];
        rows.sort_by(|&a, &b| xf[a].total_cmp(&xf[b]).then(a.cmp(&b)));
        nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
        });
        let (l, r) = rows.split_at_mut(best.n_left);
        let left = self.grow(l, nodes, rng);
        let right = self.grow(r, nodes, rng);
        if let Node::Split {
            left: lslot,
            right: rslot,
            ..
        } = &mut nodes[id]
        {
            *lslot = left;
            *rslot = right;
        }
        id
    }

    fn best_split(&self, rows: &mut [usize], rng: &mut impl Rng) -> Option<BestSplit> {
        let m = self.x.len();
        let mut features = index::sample(rng, m, self.n_try).into_vec();
        features.sort_unstable();
        let n = rows.len();
        let k = self.y.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<BestSplit> = None;
        let mut sum_l = vec![0.0; k];
        let mut sq_l = vec![0.0; k];
        let mut sum_t = vec![0.0; k];
        let mut sq_t = vec![0.0; k];
        for (j, col) in self.y.iter().enumerate() {
            for &r in rows.iter() {
                sum_t[j] += col[r];
                sq_t[j] += col[r] * col[r];
            }
        }
        for f in features {
            let xf = self.x[f];
            rows.sort_by(|&a, &b| xf[a].total_cmp(&xf[b]).then(a.cmp(&b)));
            sum_l.fill(0.0);
            sq_l.fill(0.0);
            for i in 0..n - 1 {
                let r = rows[i];
                for (j, col) in self.y.iter().enumerate() {
                    sum_l[j] += col[r];
                    sq_l[j] += col[r] * col[r];
                }
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let (a, b) = (xf[r], xf[rows[i + 1]]);
                if a == b {
                    continue;
                }
                let (nl, nr) = (n_left as f64, n_right as f64);
                let cost: f64 = (0..k)
                    .map(|j| {
                        let sr = sum_t[j] - sum_l[j];
                        let qr = sq_t[j] - sq_l[j];
                        (sq_l[j] - sum_l[j] * sum_l[j] / nl) + (qr - sr * sr / nr)
                    })
                    .sum();
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(BestSplit {
                        feature: f,
                        threshold: if mid < b { mid } else { a },
                        cost: cost.max(0.0),
                        n_left,
                    });
                }
            }
        }
        best
    }
}

impl Forest {
    /// Mean of the tree predictions for one row of features.
    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_outputs];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict_row(x)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Predictions as one column per output.
    pub fn predict(&self, x: &[&[f64]]) -> Result<Vec<Vec<f64>>, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::FeatureCount {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let n = x.first().map_or(0, |c| c.len());
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = x.iter().map(|c| c[i]).collect();
                self.predict_row(&row)
            })
            .collect();
        Ok((0..self.n_outputs)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect())
    }
}
