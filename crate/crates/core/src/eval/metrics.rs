use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::roc::{roc_curve, RocCurve, ScoredSample};
use crate::data::{bucket_angle, predict_angle, sample_indices, Dataset};
use crate::math::sqrt;
use crate::nn::{Head, Network};
use crate::rng::derive;
use crate::sim::{OracleMode, Safety};
use crate::uncertainty::{mc_samples, summarize, Measure, UncertaintyReport};
use crate::{Error, Result, MAX_STEER_DEG};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOneConfig {
    pub sample_n: usize,
    pub mode: OracleMode,
    pub passes: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for MetricOneConfig {
    fn default() -> Self {
        Self {
            sample_n: 200,
            mode: OracleMode::Arc,
            passes: crate::uncertainty::DEFAULT_PASSES,
            tau: 1.0,
            seed: 0,
        }
    }
}

/// One labeled frame of the static evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticFrame {
    pub index: usize,
    pub report: UncertaintyReport,
    pub is_unsafe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOne {
    pub frames: Vec<StaticFrame>,
    /// One curve per measure of the network's head.
    pub curves: Vec<(Measure, RocCurve)>,
}

impl MetricOne {
    pub fn curve(&self, m: Measure) -> Option<&RocCurve> {
        self.curves.iter().find(|(k, _)| *k == m).map(|(_, c)| c)
    }
}

/// Draws `sample_n` test frames, labels the network's predicted angle on
/// each with the safety oracle and builds one ROC per uncertainty measure.
pub fn metric_one(net: &Network, test: &Dataset, cfg: &MetricOneConfig) -> Result<MetricOne> {
    if !test.has_origins() {
        return Err(Error::InvalidArgument(
            "static evaluation needs a test set with recorded simulator states".into(),
        ));
    }
    if test.is_empty() || cfg.sample_n == 0 {
        return Err(Error::Empty("static evaluation sample"));
    }
    let measures = Measure::for_head(net.spec().head.kind());
    let mut frames = Vec::with_capacity(cfg.sample_n);
    for i in sample_indices(test.len(), cfg.sample_n, cfg.seed) {
        let s = mc_samples(net, &test.samples()[i].image, cfg.passes, derive(cfg.seed, i as u64 + 1))?;
        let report = summarize(&s, cfg.tau)?;
        let verdict = test.safety(i, report.prediction_deg(), cfg.mode)?;
        frames.push(StaticFrame {
            index: i,
            report,
            is_unsafe: verdict == Safety::Unsafe,
        });
    }
    let curves = measures
        .iter()
        .map(|&m| {
            let scored: Vec<ScoredSample> = frames
                .iter()
                .map(|f| ScoredSample {
                    score: f.report.measure(m).unwrap_or(f64::NAN),
                    positive: f.is_unsafe,
                })
                .collect();
            roc_curve(&scored).map(|c| (m, c))
        })
        .collect::<Result<_>>()?;
    Ok(MetricOne { frames, curves })
}

/// Root mean square of `pred - truth`.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: alloc::vec![truth.len()],
            actual: alloc::vec![pred.len()],
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("rmse input"));
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sqrt(ss / pred.len() as f64))
}

/// Fraction of exact matches.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: alloc::vec![truth.len()],
            actual: alloc::vec![pred.len()],
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("accuracy input"));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// RMSE in units of 25 degrees (the network output scale) and in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse_mean: f64,
    pub rmse_deterministic: f64,
    pub rmse_mean_deg: f64,
    pub rmse_deterministic_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// Using the mode of the predictive distribution.
    pub accuracy: f64,
    pub accuracy_deterministic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "snake_case")]
pub enum Metrics {
    Regression(RegressionMetrics),
    Classification(ClassificationMetrics),
}

/// Test-set accuracy of `net` with `passes` stochastic passes per frame.
pub fn report_metrics(net: &Network, test: &Dataset, passes: usize, seed: u64) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut mc = Vec::with_capacity(test.len());
    let mut det = Vec::with_capacity(test.len());
    for (i, s) in test.samples().iter().enumerate() {
        let r = summarize(&mc_samples(net, &s.image, passes, derive(seed, i as u64))?, 1.0)?;
        mc.push(r.prediction_deg());
        det.push(predict_angle(net, &s.image)?);
    }
    let truth: Vec<f64> = test.samples().iter().map(|s| s.angle).collect();
    Ok(match net.spec().head {
        Head::Regression => {
            let norm = |v: &[f64]| v.iter().map(|x| x / MAX_STEER_DEG).collect::<Vec<_>>();
            let t = norm(&truth);
            RegressionMetrics {
                rmse_mean: rmse(&norm(&mc), &t)?,
                rmse_deterministic: rmse(&norm(&det), &t)?,
                rmse_mean_deg: rmse(&mc, &truth)?,
                rmse_deterministic_deg: rmse(&det, &truth)?,
            }
            .into()
        }
        Head::Classification { .. } => {
            let classes = |v: &[f64]| v.iter().map(|&a| bucket_angle(a)).collect::<Result<Vec<_>>>();
            let t = classes(&truth)?;
            ClassificationMetrics {
                accuracy: accuracy(&classes(&mc)?, &t)?,
                accuracy_deterministic: accuracy(&classes(&det)?, &t)?,
            }
            .into()
        }
    })
}

impl From<RegressionMetrics> for Metrics {
    fn from(m: RegressionMetrics) -> Self {
        Metrics::Regression(m)
    }
}

impl From<ClassificationMetrics> for Metrics {
    fn from(m: ClassificationMetrics) -> Self {
        Metrics::Classification(m)
    }
}
