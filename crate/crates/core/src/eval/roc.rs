use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An uncertainty score with its ground truth; positive means unsafe or crashed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Operating points for every distinct score, from `+inf` (nothing
/// flagged) down to `-inf` (everything flagged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

fn counts(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    if samples.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::NonFinite("ROC scores"));
    }
    let p = samples.iter().filter(|s| s.positive).count();
    let n = samples.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass {
            positives: p,
            negatives: n,
        });
    }
    Ok((p, n))
}

/// A sample is flagged when `score >= threshold`. AUC is the trapezoid
/// area under the `(fpr, tpr)` points.
pub fn roc_curve(samples: &[ScoredSample]) -> Result<RocCurve> {
    let (p, n) = counts(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let (pf, nf) = (p as f64, n as f64);
    let mut points = Vec::with_capacity(sorted.len() + 2);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    });
    let (mut tp, mut fp) = (0usize, 0usize);
    // Twice the area in units of one positive-negative pair.
    let mut area2 = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        points.push(RocPoint {
            threshold: s,
            tpr: tp as f64 / pf,
            fpr: fp as f64 / nf,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        tpr: 1.0,
        fpr: 1.0,
    });
    Ok(RocCurve {
        points,
        auc: area2 as f64 / (2.0 * pf * nf),
        positives: p,
        negatives: n,
    })
}

/// Confusion-matrix rates at one threshold, by direct counting.
pub fn rates_at(samples: &[ScoredSample], threshold: f64) -> Result<(f64, f64)> {
    let (p, n) = counts(samples)?;
    let tp = samples.iter().filter(|s| s.positive && s.score >= threshold).count();
    let fp = samples.iter().filter(|s| !s.positive && s.score >= threshold).count();
    Ok((tp as f64 / p as f64, fp as f64 / n as f64))
}

/// Fraction of positive-negative pairs ordered correctly, ties counting half.
pub fn mann_whitney(samples: &[ScoredSample]) -> Result<f64> {
    let (p, n) = counts(samples)?;
    let mut wins = 0.0;
    for a in samples.iter().filter(|s| s.positive) {
        for b in samples.iter().filter(|s| !s.positive) {
            if a.score > b.score {
                wins += 1.0;
            } else if a.score == b.score {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (p as f64 * n as f64))
}

/// A chosen operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub max_fpr: f64,
    /// No finite threshold met `max_fpr`; the lowest-fpr point was taken.
    pub fallback: bool,
}

impl ThresholdChoice {
    pub fn policy(&self) -> alloc::string::String {
        if self.fallback {
            alloc::format!("min_fpr_fallback(max_fpr={})", self.max_fpr)
        } else {
            alloc::format!("max_tpr(fpr<={})", self.max_fpr)
        }
    }
}

pub const DEFAULT_MAX_FPR: f64 = 0.30;

/// Highest tpr among finite thresholds with `fpr <= max_fpr`, preferring
/// lower fpr and then higher threshold on ties.
pub fn select_threshold(curve: &RocCurve, max_fpr: f64) -> Result<ThresholdChoice> {
    if max_fpr.is_nan() {
        return Err(Error::InvalidArgument("max_fpr is NaN".into()));
    }
    let finite: Vec<&RocPoint> = curve.points.iter().filter(|p| p.threshold.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Empty("finite ROC points"));
    }
    let better = |a: &RocPoint, b: &RocPoint| {
        (a.tpr, -a.fpr, a.threshold)
            .partial_cmp(&(b.tpr, -b.fpr, b.threshold))
            .is_some_and(|o| o.is_gt())
    };
    let mut best: Option<&RocPoint> = None;
    for &p in finite.iter().filter(|p| p.fpr <= max_fpr) {
        if best.is_none_or(|b| better(p, b)) {
            best = Some(p);
        }
    }
    let (point, fallback) = match best {
        Some(p) => (p, false),
        None => {
            let mut m = finite[0];
            for &p in &finite[1..] {
                let key = |q: &RocPoint| (-q.fpr, q.tpr, q.threshold);
                if key(p).partial_cmp(&key(m)).is_some_and(|o| o.is_gt()) {
                    m = p;
                }
            }
            (m, true)
        }
    };
    Ok(ThresholdChoice {
        threshold: point.threshold,
        tpr: point.tpr,
        fpr: point.fpr,
        max_fpr,
        fallback,
    })
}
