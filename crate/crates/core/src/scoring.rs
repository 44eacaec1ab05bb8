//! Scalar association and skill measures.
//!
//! Skill metrics (NSE, KGE skill score) are scaled so that predicting the
//! observed mean scores 0 and a perfect prediction scores 1. Strengths are
//! the product of an edge's attribution share and the clipped skill.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::additive::AdditiveModel;
use crate::dataset::value_range;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ScoreError {
    #[error("columns have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("constant column")]
    ConstantColumn,
    #[error("observed mean is zero; KGE bias term is undefined")]
    ZeroMeanObs,
    #[error("model input {0:?} not provided")]
    MissingInput(String),
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn check_pair(x: &[f64], y: &[f64], need: usize) -> Result<(), ScoreError> {
    if x.len() != y.len() {
        return Err(ScoreError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < need {
        return Err(ScoreError::TooFew {
            need,
            got: x.len(),
        });
    }
    Ok(())
}

/// Sample correlation coefficient, symmetric in its arguments bit for bit.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, ScoreError> {
    check_pair(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ScoreError::ConstantColumn);
    }
    // product is commutative, and sqrt(a * a) == a, so pearson(x, x) == 1
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Nash-Sutcliffe efficiency (R² skill score).
pub fn nse(obs: &[f64], pred: &[f64]) -> Result<f64, ScoreError> {
    check_pair(obs, pred, 1)?;
    let m = mean(obs);
    let ss_tot: f64 = obs.iter().map(|o| (o - m) * (o - m)).sum();
    if ss_tot == 0.0 {
        return Err(ScoreError::ConstantColumn);
    }
    let ss_res: f64 = obs.iter().zip(pred).map(|(o, p)| (o - p) * (o - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Kling-Gupta efficiency.
pub fn kge(obs: &[f64], pred: &[f64]) -> Result<f64, ScoreError> {
    check_pair(obs, pred, 2)?;
    let (mo, so) = (mean(obs), std_dev(obs));
    if so == 0.0 {
        return Err(ScoreError::ConstantColumn);
    }
    if mo == 0.0 {
        return Err(ScoreError::ZeroMeanObs);
    }
    let sp = std_dev(pred);
    if sp == 0.0 {
        return Ok(1.0 - 2f64.sqrt());
    }
    let r = pearson(obs, pred)?;
    let alpha = sp / so;
    let beta = mean(pred) / mo;
    Ok(1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt())
}

/// KGE rescaled so the mean benchmark (KGE = 1 - √2) scores 0.
/// A constant prediction scores exactly 0.
pub fn kge_skill(obs: &[f64], pred: &[f64]) -> Result<f64, ScoreError> {
    let k = kge(obs, pred)?;
    if std_dev(pred) == 0.0 {
        return Ok(0.0);
    }
    // (KGE - (1 - √2)) / √2 written as 1 - distance / √2, exact at KGE = 1
    Ok(1.0 - (1.0 - k) / 2f64.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Nse,
    KgeSs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillMetric {
    pub kind: MetricKind,
    pub value: f64,
    pub clipped: f64,
}

impl SkillMetric {
    pub fn compute(kind: MetricKind, obs: &[f64], pred: &[f64]) -> Result<Self, ScoreError> {
        let value = match kind {
            MetricKind::Nse => nse(obs, pred)?,
            MetricKind::KgeSs => kge_skill(obs, pred)?,
        };
        Ok(Self {
            kind,
            value,
            clipped: value.clamp(0.0, 1.0),
        })
    }
}

/// Equal-width bin count used when none is given:
/// `min(32, max(8, ceil(n^(1/3))))`.
pub fn default_bins(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).clamp(8, 32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub bins: usize,
    pub mi_bits: f64,
    pub h_x_bits: f64,
    pub h_y_bits: f64,
    pub nmi_symmetric: f64,
    pub nmi_by_input: f64,
    pub nmi_by_target: f64,
}

impl MiEstimate {
    fn zero(bins: usize) -> Self {
        Self {
            bins,
            mi_bits: 0.0,
            h_x_bits: 0.0,
            h_y_bits: 0.0,
            nmi_symmetric: 0.0,
            nmi_by_input: 0.0,
            nmi_by_target: 0.0,
        }
    }
}

fn discretize(v: &[f64], bins: usize) -> Option<Vec<usize>> {
    let (lo, hi) = value_range(v)?;
    let span = hi - lo;
    Some(
        v.iter()
            .map(|x| (((x - lo) / span * bins as f64).floor() as usize).min(bins - 1))
            .collect(),
    )
}

// Entropy in bits from counts. Counts are sorted first so the sum does not
// depend on cell order (a transposed joint table gives the same bits).
fn entropy_bits(mut counts: Vec<u64>, total: f64) -> f64 {
    counts.retain(|&c| c > 0);
    counts.sort_unstable();
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Histogram MI with equal-width bins over each column's own range.
/// `x` is the input and `y` the target for the asymmetric normalizations.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<MiEstimate, ScoreError> {
    let bins = bins.max(1);
    check_pair(x, y, bins)?;
    let (Some(bx), Some(by)) = (discretize(x, bins), discretize(y, bins)) else {
        return Ok(MiEstimate::zero(bins));
    };
    let total = x.len() as f64;
    let mut joint = vec![0u64; bins * bins];
    let mut cx = vec![0u64; bins];
    let mut cy = vec![0u64; bins];
    for (&i, &j) in bx.iter().zip(&by) {
        joint[i * bins + j] += 1;
        cx[i] += 1;
        cy[j] += 1;
    }
    let hx = entropy_bits(cx, total);
    let hy = entropy_bits(cy, total);
    let hxy = entropy_bits(joint, total);
    let marg = hx + hy;
    let mi = (marg - hxy).max(0.0).min(hx.min(hy));
    let ratio = |num: f64, den: f64| if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 };
    Ok(MiEstimate {
        bins,
        mi_bits: mi,
        h_x_bits: hx,
        h_y_bits: hy,
        nmi_symmetric: ratio(2.0 * mi, marg),
        nmi_by_input: ratio(mi, hx),
        nmi_by_target: ratio(mi, hy),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Prediction had zero spread while edges existed; shares set equal.
    pub degenerate: bool,
}

/// Per-edge ratio `std(φ_j(x_j)) / std(prediction)`, normalized to shares.
///
/// `columns` supplies each edge's input by name; all are assumed to have
/// the same length.
pub fn edge_attribution(
    model: &AdditiveModel,
    columns: &[(&str, &[f64])],
) -> Result<AttributionVector, ScoreError> {
    let m = model.edges.len();
    if m == 0 {
        return Ok(AttributionVector {
            raw: vec![],
            normalized: vec![],
            degenerate: false,
        });
    }
    let mut activations = Vec::with_capacity(m);
    for edge in &model.edges {
        let col = columns
            .iter()
            .find(|(n, _)| *n == edge.input_name)
            .ok_or_else(|| ScoreError::MissingInput(edge.input_name.clone()))?
            .1;
        activations.push(edge.eval_many(col));
    }
    let n = activations[0].len();
    let pred: Vec<f64> = (0..n)
        .map(|i| model.intercept + activations.iter().map(|a| a[i]).sum::<f64>())
        .collect();
    let sd_pred = std_dev(&pred);
    if sd_pred == 0.0 || !sd_pred.is_finite() {
        let share = 1.0 / m as f64;
        return Ok(AttributionVector {
            raw: vec![share; m],
            normalized: vec![share; m],
            degenerate: true,
        });
    }
    let raw: Vec<f64> = activations.iter().map(|a| std_dev(a) / sd_pred).collect();
    Ok(AttributionVector {
        normalized: normalize_shares(&raw),
        raw,
        degenerate: false,
    })
}

/// Share-of-sum normalization; all zeros when the sum is zero.
pub fn normalize_shares(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|r| r / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

/// `share_j * clipped skill`, so the strengths sum to the clipped skill.
pub fn combine_strengths(shares: &[f64], skill: &SkillMetric) -> Vec<f64> {
    shares
        .iter()
        .map(|s| (s * skill.clipped).clamp(0.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeStrengths {
    pub names: Vec<String>,
    pub strengths: Vec<f64>,
    pub attribution: AttributionVector,
    pub skill: SkillMetric,
}

/// Per-edge strengths of `model` on holdout data.
pub fn strength(
    model: &AdditiveModel,
    x_test: &[(&str, &[f64])],
    y_test: &[f64],
    kind: MetricKind,
) -> Result<EdgeStrengths, ScoreError> {
    let pred = model
        .predict(x_test)
        .map_err(|e| ScoreError::MissingInput(e.to_string()))?;
    let skill = SkillMetric::compute(kind, y_test, &pred)?;
    let attribution = edge_attribution(model, x_test)?;
    Ok(EdgeStrengths {
        names: model.edges.iter().map(|e| e.input_name.clone()).collect(),
        strengths: combine_strengths(&attribution.normalized, &skill),
        attribution,
        skill,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    // Simpson's rule on [a, b].
    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 2000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn pearson_basics() {
        let x = uniform(5000, -2.0, 2.0, 1);
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = rand_distr::Normal::new(0.0, 0.1).unwrap();
        let sq: Vec<f64> = x.iter().map(|v| v * v + rng.sample(normal)).collect();
        assert!(pearson(&x, &sq).unwrap().abs() <= 0.05);
        assert_eq!(pearson(&x, &[1.0; 5000]), Err(ScoreError::ConstantColumn));
    }

    #[test]
    fn pearson_cubic_matches_quadrature() {
        // E x^4 / sqrt(E x^2 E x^6) for x ~ U(-2,2)
        let e = |k: i32| quad(|x| x.powi(k) / 4.0, -2.0, 2.0);
        let analytic = e(4) / (e(2) * e(6)).sqrt();
        assert!((analytic - 0.9165).abs() < 1e-3, "{analytic}");
        let x = uniform(5000, -2.0, 2.0, 3);
        let cube: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        let r = pearson(&x, &cube).unwrap();
        assert!((r - analytic).abs() < 0.01, "{r} vs {analytic}");
    }

    #[test]
    fn nse_values() {
        let obs = [0.0, 1.0, 2.0];
        assert_eq!(nse(&obs, &obs).unwrap(), 1.0);
        assert_eq!(nse(&obs, &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(nse(&obs, &[0.0, 0.0, 0.0]).unwrap(), -1.5);
        assert_eq!(nse(&[2.0, 2.0], &[1.0, 2.0]), Err(ScoreError::ConstantColumn));
    }

    #[test]
    fn kge_values() {
        let obs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kge_skill(&obs, &obs).unwrap(), 1.0);
        assert_eq!(kge_skill(&obs, &[2.5; 4]).unwrap(), 0.0);
        assert_eq!(kge_skill(&obs, &[7.0; 4]).unwrap(), 0.0);
        // r = 1, alpha = 1, beta = 2: shift by the mean
        let shifted: Vec<f64> = obs.iter().map(|o| o + 2.5).collect();
        assert!(kge(&obs, &shifted).unwrap().abs() < 1e-12);
        assert!((kge_skill(&obs, &shifted).unwrap() - 0.29289).abs() < 1e-5);
        assert_eq!(kge_skill(&[-1.0, 1.0], &[0.0, 1.0]), Err(ScoreError::ZeroMeanObs));
    }

    #[test]
    fn skill_metric_clips() {
        let s = SkillMetric::compute(MetricKind::Nse, &[0.0, 1.0, 2.0], &[0.0; 3]).unwrap();
        assert_eq!((s.value, s.clipped), (-1.5, 0.0));
    }

    #[test]
    fn bins_rule() {
        assert_eq!(default_bins(10), 8);
        assert_eq!(default_bins(5000), 18);
        assert_eq!(default_bins(1_000_000), 32);
    }

    #[test]
    fn mi_self_is_one() {
        let x = uniform(1000, 0.0, 1.0, 4);
        for bins in [2, 5, 20] {
            let e = mutual_information(&x, &x, bins).unwrap();
            assert!((e.nmi_symmetric - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mi_venn_case() {
        // X uniform on 4 values, Y = X >= 2
        let x: Vec<f64> = (0..400).map(|i| (i % 4) as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v >= 2.0 { 1.0 } else { 0.0 }).collect();
        let e = mutual_information(&x, &y, 4).unwrap();
        assert_eq!(e.mi_bits, 1.0);
        assert_eq!(e.h_x_bits, 2.0);
        assert_eq!(e.h_y_bits, 1.0);
        assert_eq!(e.nmi_by_target, 1.0);
        assert_eq!(e.nmi_by_input, 0.5);
        assert_eq!(e.nmi_symmetric, 2.0 / 3.0);
    }

    #[test]
    fn mi_independent_is_small() {
        let x = uniform(10_000, 0.0, 1.0, 5);
        let y = uniform(10_000, 0.0, 1.0, 6);
        let e = mutual_information(&x, &y, 20).unwrap();
        // shuffled-surrogate oracle: the estimate should sit at the bias floor
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut surrogate = 0.0;
        let mut ys = y.clone();
        for _ in 0..100 {
            for i in (1..ys.len()).rev() {
                ys.swap(i, rng.random_range(0..=i));
            }
            surrogate += mutual_information(&x, &ys, 20).unwrap().nmi_symmetric;
        }
        surrogate /= 100.0;
        assert!(e.nmi_symmetric <= 0.05);
        assert!(surrogate <= 0.05);
        assert!((e.nmi_symmetric - surrogate).abs() < 0.01);
    }

    #[test]
    fn mi_constant_is_zero() {
        let e = mutual_information(&[1.0; 50], &uniform(50, 0.0, 1.0, 8), 8).unwrap();
        assert_eq!(e, MiEstimate::zero(8));
    }

    #[test]
    fn table_shape_strengths() {
        let skill = SkillMetric {
            kind: MetricKind::Nse,
            value: 0.935,
            clipped: 0.935,
        };
        let s = combine_strengths(&[0.666, 0.195, 0.139], &skill);
        for (got, want) in s.iter().zip([0.623, 0.182, 0.129]) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert!((s.iter().sum::<f64>() - 0.935).abs() < 1e-12);
        let zero = SkillMetric { clipped: 0.0, value: -0.3, ..skill };
        assert_eq!(combine_strengths(&[0.5, 0.5], &zero), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn pearson_symmetric(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..100)) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&y, &x)) {
                prop_assert_eq!(a, b);
                prop_assert!(a.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn mi_bounds_and_symmetry(v in proptest::collection::vec((0f64..1.0, 0f64..1.0), 20..300), bins in 2usize..12) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let a = mutual_information(&x, &y, bins).unwrap();
            let b = mutual_information(&y, &x, bins).unwrap();
            prop_assert_eq!(a.nmi_symmetric, b.nmi_symmetric);
            prop_assert!(a.mi_bits >= -1e-12);
            prop_assert!(a.mi_bits <= a.h_x_bits.min(a.h_y_bits) + 1e-10);
            for v in [a.nmi_symmetric, a.nmi_by_input, a.nmi_by_target] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn shares_sum_to_one(raw in proptest::collection::vec(0f64..10.0, 1..20)) {
            let s = normalize_shares(&raw);
            if raw.iter().sum::<f64>() > 0.0 {
                prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
            prop_assert!(s.iter().all(|&v| v >= 0.0));
        }
    }
}
