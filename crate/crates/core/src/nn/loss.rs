use alloc::vec;
use serde::{Deserialize, Serialize};

use crate::math::log;
use crate::{Error, Result, Tensor};

/// Probabilities are clamped to this floor inside the cross-entropy log.
pub const CE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    MeanSquaredError,
    CategoricalCrossEntropy,
}

/// Loss between a prediction and a target of the same shape.
///
/// Cross-entropy uses the natural log with `max(p, CE_EPSILON)`, so a zero
/// probability at the target class gives `-ln 1e-12` instead of infinity.
pub fn loss(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            expected: target.shape().to_vec(),
            actual: pred.shape().to_vec(),
        });
    }
    if !pred.all_finite() || !target.all_finite() {
        return Err(Error::NonFinite("loss input"));
    }
    Ok(flat_loss(pred.data(), target.data(), kind))
}

pub(crate) fn flat_loss(pred: &[f64], target: &[f64], kind: LossKind) -> f64 {
    match kind {
        LossKind::MeanSquaredError => {
            pred.iter()
                .zip(target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / pred.len() as f64
        }
        LossKind::CategoricalCrossEntropy => {
            let l = -pred
                .iter()
                .zip(target)
                .filter(|(_, &t)| t != 0.0)
                .map(|(&p, &t)| t * log(p.max(CE_EPSILON)))
                .sum::<f64>();
            l.max(0.0)
        }
    }
}

/// Gradient of [`flat_loss`] with respect to the prediction.
pub(crate) fn flat_loss_grad(pred: &[f64], target: &[f64], kind: LossKind) -> alloc::vec::Vec<f64> {
    match kind {
        LossKind::MeanSquaredError => {
            let n = pred.len() as f64;
            pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect()
        }
        LossKind::CategoricalCrossEntropy => {
            let mut g = vec![0.0; pred.len()];
            for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
                if t != 0.0 && p > CE_EPSILON {
                    g[i] = -t / p;
                }
            }
            g
        }
    }
}
