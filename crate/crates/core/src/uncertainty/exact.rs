use alloc::vec;
use alloc::vec::Vec;

use crate::math::{argmax, entropy};
use crate::nn::{Head, Masks, Network};
use crate::{Error, Result, Tensor};

/// Largest number of droppable units [`exact_predictive`] will enumerate.
pub const MAX_ENUMERABLE_UNITS: usize = 20;

/// Predictive quantities computed by summing over every dropout mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPredictive {
    /// Mask-probability-weighted mean softmax output.
    pub mean: Vec<f64>,
    /// Expected per-mask entropy.
    pub expected_entropy: f64,
    /// Probability that a random mask's argmax is each class.
    pub argmax_probs: Vec<f64>,
}

impl ExactPredictive {
    pub fn entropy(&self) -> f64 {
        entropy(&self.mean)
    }

    pub fn mutual_information(&self) -> f64 {
        self.entropy() - self.expected_entropy
    }

    /// Limit of the variation ratio as the number of passes grows.
    pub fn variation_ratio(&self) -> f64 {
        1.0 - self.argmax_probs.iter().copied().fold(0.0, f64::max)
    }
}

/// Exact mean softmax output over all `2^k` dropout masks.
pub fn exact_predictive_distribution(net: &Network, input: &Tensor) -> Result<Vec<f64>> {
    Ok(exact_predictive(net, input)?.mean)
}

/// Enumerates every keep/drop pattern of the units in dropout layers with
/// `p_drop > 0`, weighting each by its Bernoulli probability.
pub fn exact_predictive(net: &Network, input: &Tensor) -> Result<ExactPredictive> {
    let Head::Classification { classes } = net.spec().head else {
        return Err(Error::WrongKind {
            expected: "classification",
            actual: "regression",
        });
    };
    if input.shape() != net.spec().input_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: net.spec().input_shape.to_vec(),
            actual: input.shape().to_vec(),
        });
    }
    let layers = net.dropout_units();
    let droppable: usize = layers.iter().filter(|l| l.2 > 0.0).map(|l| l.1).sum();
    if droppable > MAX_ENUMERABLE_UNITS {
        return Err(Error::TooManyDroppableUnits {
            units: droppable,
            limit: MAX_ENUMERABLE_UNITS,
        });
    }
    let mut masks = Masks {
        keep: layers.iter().map(|&(_, units, _)| vec![true; units]).collect(),
    };
    let mut mean = vec![0.0; classes];
    let mut argmax_probs = vec![0.0; classes];
    let mut expected_entropy = 0.0;
    for pattern in 0u64..(1u64 << droppable) {
        let mut bit = 0;
        let mut weight = 1.0;
        for (m, &(_, _, p)) in masks.keep.iter_mut().zip(&layers) {
            if p == 0.0 {
                continue;
            }
            for k in m.iter_mut() {
                *k = pattern >> bit & 1 == 0;
                weight *= if *k { 1.0 - p } else { p };
                bit += 1;
            }
        }
        let probs = net.forward_masked(input.data(), &masks)?;
        for (a, p) in mean.iter_mut().zip(&probs) {
            *a += weight * p;
        }
        argmax_probs[argmax(&probs)] += weight;
        expected_entropy += weight * entropy(&probs);
    }
    Ok(ExactPredictive {
        mean,
        expected_entropy,
        argmax_probs,
    })
}
