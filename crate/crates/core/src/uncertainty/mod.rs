//! Monte-Carlo dropout uncertainty.
//!
//! A network with dropout is run `T` times on the same input with fresh
//! masks each time. Regression heads yield `T` scalar predictions,
//! summarized by their mean and by a variance that adds the model
//! observation noise `1 / tau`. Softmax heads yield a `T x C` matrix of
//! probability rows, summarized by the variation ratio of the per-pass
//! argmax labels, the entropy of the mean row, and the mutual information
//! between the label and the weights.
//!
//! Entropies are in nats.

mod calibrate;
mod exact;

pub use calibrate::{calibrate_tau, Calibration, CalibrationCandidate, TauGrid};
pub use exact::{exact_predictive, exact_predictive_distribution, ExactPredictive, MAX_ENUMERABLE_UNITS};

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::{argmax, entropy, log, shifted_mean, xlogx};
use crate::nn::{Head, HeadKind, Network};
use crate::rng::stream_rng;
use crate::{Error, Result, Tensor, MAX_STEER_DEG};

/// Passes per frame used throughout (one batch of 128).
pub const DEFAULT_PASSES: usize = 128;

/// Outputs of `T` stochastic forward passes.
#[derive(Debug, Clone, PartialEq)]
pub enum PassSamples {
    /// One prediction per pass.
    Regression(Vec<f64>),
    /// `T` softmax rows of length `classes`, row-major.
    Classification { classes: usize, probs: Vec<f64> },
}

impl PassSamples {
    pub fn regression(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("pass samples"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pass samples"));
        }
        Ok(PassSamples::Regression(values))
    }

    /// Validates that every row is a probability vector (sum within 1e-9).
    pub fn classification(classes: usize, probs: Vec<f64>) -> Result<Self> {
        if classes == 0 || probs.is_empty() {
            return Err(Error::Empty("pass samples"));
        }
        if probs.len() % classes != 0 {
            return Err(Error::ShapeMismatch {
                expected: vec![probs.len() / classes, classes],
                actual: vec![probs.len()],
            });
        }
        for row in probs.chunks(classes) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "softmax row sums to {sum}, expected 1"
                )));
            }
        }
        Ok(PassSamples::Classification { classes, probs })
    }

    pub fn passes(&self) -> usize {
        match self {
            PassSamples::Regression(v) => v.len(),
            PassSamples::Classification { classes, probs } => probs.len() / classes,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PassSamples::Regression(_) => "regression",
            PassSamples::Classification { .. } => "classification",
        }
    }

    fn as_regression(&self) -> Result<&[f64]> {
        match self {
            PassSamples::Regression(v) => Ok(v),
            other => Err(Error::WrongKind {
                expected: "regression",
                actual: other.kind_name(),
            }),
        }
    }

    fn as_classification(&self) -> Result<(usize, &[f64])> {
        match self {
            PassSamples::Classification { classes, probs } => Ok((*classes, probs)),
            other => Err(Error::WrongKind {
                expected: "classification",
                actual: other.kind_name(),
            }),
        }
    }
}

/// Runs `passes` stochastic forward passes; pass `t` uses mask stream `t` of `seed`.
///
/// Layers before the first active dropout are evaluated once and shared.
pub fn mc_samples(net: &Network, input: &Tensor, passes: usize, seed: u64) -> Result<PassSamples> {
    if passes == 0 {
        return Err(Error::InvalidArgument("at least one pass is required".into()));
    }
    if input.shape() != net.spec().input_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: net.spec().input_shape.to_vec(),
            actual: input.shape().to_vec(),
        });
    }
    let (start, act) = net.deterministic_prefix(input.data())?;
    let outputs = net.spec().head.outputs();
    let mut all = Vec::with_capacity(passes * outputs);
    for t in 0..passes {
        let mut rng = stream_rng(seed, t as u64);
        let out = net.stochastic_from(start, &act, &mut rng)?;
        all.extend_from_slice(&out);
    }
    match net.spec().head {
        Head::Regression => PassSamples::regression(all),
        Head::Classification { classes } => PassSamples::classification(classes, all),
    }
}

/// Mean of the regression samples.
pub fn predictive_mean(s: &PassSamples) -> Result<f64> {
    let v = s.as_regression()?;
    let (lo, hi) = min_max(v);
    Ok(shifted_mean(v.iter().copied()).clamp(lo, hi))
}

/// `1/tau + (1/T) sum y_t^2 - mean^2`, with the raw moments taken about the
/// first sample so identical samples give exactly `1/tau`.
pub fn predictive_variance(s: &PassSamples, tau: f64) -> Result<f64> {
    let v = s.as_regression()?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("tau {tau} must be positive")));
    }
    let y0 = v[0];
    let n = v.len() as f64;
    let second = v.iter().map(|&y| (y - y0) * (y - y0)).sum::<f64>() / n;
    let first = v.iter().map(|&y| y - y0).sum::<f64>() / n;
    let spread = (second - first * first).max(0.0);
    Ok(1.0 / tau + spread)
}

/// Model precision from length scale, keep probability, training-set size and L2 multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionParams {
    pub length_scale: f64,
    pub p_keep: f64,
    pub n_train: usize,
    pub lambda: f64,
    pub tau: f64,
}

impl PrecisionParams {
    pub fn new(length_scale: f64, p_keep: f64, n_train: usize, lambda: f64) -> Result<Self> {
        Ok(Self {
            length_scale,
            p_keep,
            n_train,
            lambda,
            tau: compute_tau(length_scale, p_keep, n_train, lambda)?,
        })
    }
}

/// `tau = l^2 p / (2 N lambda)`.
pub fn compute_tau(length_scale: f64, p_keep: f64, n_train: usize, lambda: f64) -> Result<f64> {
    let ok = length_scale > 0.0
        && length_scale.is_finite()
        && p_keep > 0.0
        && p_keep <= 1.0
        && n_train > 0
        && lambda > 0.0
        && lambda.is_finite();
    if !ok {
        return Err(Error::InvalidArgument(alloc::format!(
            "tau needs l > 0, p in (0, 1], N > 0, lambda > 0; got l={length_scale}, p={p_keep}, N={n_train}, lambda={lambda}"
        )));
    }
    Ok(length_scale * length_scale * p_keep / (2.0 * n_train as f64 * lambda))
}

/// Modal argmax label across passes and its count; ties go to the lowest class.
pub fn mode_and_freq(s: &PassSamples) -> Result<(usize, usize)> {
    let (classes, probs) = s.as_classification()?;
    let mut counts = vec![0usize; classes];
    for row in probs.chunks(classes) {
        counts[argmax(row)] += 1;
    }
    let mut mode = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[mode] {
            mode = c;
        }
    }
    Ok((mode, counts[mode]))
}

/// `1 - f_x / T`.
pub fn variation_ratio(s: &PassSamples) -> Result<f64> {
    let (_, freq) = mode_and_freq(s)?;
    Ok(1.0 - freq as f64 / s.passes() as f64)
}

/// Mean softmax row, averaged about the first row so identical rows are reproduced exactly.
pub fn mean_probs(s: &PassSamples) -> Result<Vec<f64>> {
    let (classes, probs) = s.as_classification()?;
    let t = probs.len() / classes;
    let first = &probs[..classes];
    let mut acc = vec![0.0; classes];
    for row in probs.chunks(classes).skip(1) {
        for ((a, &p), &p0) in acc.iter_mut().zip(row).zip(first) {
            *a += p - p0;
        }
    }
    Ok(first
        .iter()
        .zip(&acc)
        .map(|(&p0, &a)| (p0 + a / t as f64).max(0.0))
        .collect())
}

/// Entropy of the mean softmax row.
pub fn predictive_entropy(s: &PassSamples) -> Result<f64> {
    Ok(entropy(&mean_probs(s)?).max(0.0))
}

/// Entropy of the mean row minus the mean per-pass entropy.
///
/// Evaluated as the average KL divergence of each row from the mean row,
/// which is algebraically the same quantity and exactly zero when all rows
/// agree. Clamped to `[0, predictive_entropy]`.
pub fn mutual_information(s: &PassSamples) -> Result<f64> {
    let (classes, probs) = s.as_classification()?;
    let mean = mean_probs(s)?;
    let h = entropy(&mean).max(0.0);
    let log_mean: Vec<f64> = mean.iter().map(|&m| if m > 0.0 { log(m) } else { 0.0 }).collect();
    let t = probs.len() / classes;
    let mut acc = 0.0;
    for row in probs.chunks(classes) {
        for (&p, &lm) in row.iter().zip(&log_mean) {
            if p > 0.0 {
                acc += xlogx(p) - p * lm;
            }
        }
    }
    Ok((acc / t as f64).clamp(0.0, h))
}

/// Summary of one input's pass samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UncertaintyReport {
    Regression {
        /// Predictive mean in degrees, clamped to the steering range.
        prediction_deg: f64,
        /// Predictive variance in squared network output units.
        variance: f64,
    },
    Classification {
        /// Bucket center of the modal class, degrees.
        prediction_deg: f64,
        variation_ratio: f64,
        entropy: f64,
        mutual_information: f64,
        mode_class: usize,
        mode_freq: usize,
    },
}

impl UncertaintyReport {
    pub fn prediction_deg(&self) -> f64 {
        match *self {
            UncertaintyReport::Regression { prediction_deg, .. }
            | UncertaintyReport::Classification { prediction_deg, .. } => prediction_deg,
        }
    }

    /// Value of `m`, or `None` when the head does not produce it.
    pub fn measure(&self, m: Measure) -> Option<f64> {
        match (*self, m) {
            (UncertaintyReport::Regression { variance, .. }, Measure::Variance) => Some(variance),
            (UncertaintyReport::Classification { variation_ratio, .. }, Measure::VariationRatio) => {
                Some(variation_ratio)
            }
            (UncertaintyReport::Classification { entropy, .. }, Measure::Entropy) => Some(entropy),
            (UncertaintyReport::Classification { mutual_information, .. }, Measure::MutualInformation) => {
                Some(mutual_information)
            }
            _ => None,
        }
    }
}

/// Scalar uncertainty measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "variance")]
    Variance,
    #[serde(rename = "vr")]
    VariationRatio,
    #[serde(rename = "entropy")]
    Entropy,
    #[serde(rename = "mi")]
    MutualInformation,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::VariationRatio,
        Measure::Entropy,
        Measure::MutualInformation,
        Measure::Variance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Variance => "variance",
            Measure::VariationRatio => "vr",
            Measure::Entropy => "entropy",
            Measure::MutualInformation => "mi",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Measures produced by a head.
    pub fn for_head(kind: HeadKind) -> &'static [Measure] {
        match kind {
            HeadKind::Regression => &[Measure::Variance],
            HeadKind::Classification => &[Measure::VariationRatio, Measure::Entropy, Measure::MutualInformation],
        }
    }
}

/// Summarizes pass samples.
///
/// Regression networks predict angles in units of 25 degrees. The
/// prediction is reported in degrees while the variance stays in network
/// output units, the units `tau` is calibrated in.
pub fn summarize(s: &PassSamples, tau: f64) -> Result<UncertaintyReport> {
    match s {
        PassSamples::Regression(_) => Ok(UncertaintyReport::Regression {
            prediction_deg: (predictive_mean(s)? * MAX_STEER_DEG).clamp(-MAX_STEER_DEG, MAX_STEER_DEG),
            variance: predictive_variance(s, tau)?,
        }),
        PassSamples::Classification { .. } => {
            let (mode_class, mode_freq) = mode_and_freq(s)?;
            Ok(UncertaintyReport::Classification {
                prediction_deg: crate::data::unbucket(mode_class),
                variation_ratio: 1.0 - mode_freq as f64 / s.passes() as f64,
                entropy: predictive_entropy(s)?,
                mutual_information: mutual_information(s)?,
                mode_class,
                mode_freq,
            })
        }
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

#[cfg(test)]
mod tests;
