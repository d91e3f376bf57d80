use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{compute_tau, mc_samples, predictive_mean, PassSamples, PrecisionParams};
use crate::math::{exp, log, sqrt, PI};
use crate::nn::{train, Head, Network, NetworkSpec, Target, TrainConfig, TrainingSet};
use crate::{Error, Result, Tensor};

/// Length scales and L2 multipliers to search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub length_scales: Vec<f64>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCandidate {
    pub length_scale: f64,
    pub lambda: f64,
    pub tau: f64,
    /// RMSE of the MC predictive mean on the validation set (network output units).
    pub validation_rmse: f64,
    /// Mean Gaussian predictive log-likelihood of the validation targets.
    pub validation_log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub best: PrecisionParams,
    pub candidates: Vec<CalibrationCandidate>,
}

/// Grid search over `(length scale, lambda)` for a regression network.
///
/// Each lambda trains a fresh network from `spec` on `train_set`. The pair
/// with the lowest validation RMSE wins; the length scale does not change
/// the fit, so among equal RMSE the higher validation log-likelihood under
/// `tau(l, lambda)` wins, then the smaller lambda, then the smaller length
/// scale. `N` in the precision formula is `train_set.len()`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_tau<D: TrainingSet + ?Sized>(
    spec: &NetworkSpec,
    train_set: &D,
    validation: &D,
    cfg: &TrainConfig,
    grid: &TauGrid,
    p_keep: f64,
    passes: usize,
    seed: u64,
) -> Result<Calibration> {
    if grid.length_scales.is_empty() || grid.lambdas.is_empty() {
        return Err(Error::Empty("calibration grid"));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if spec.head != Head::Regression {
        return Err(Error::WrongKind {
            expected: "regression",
            actual: "classification",
        });
    }
    let n_train = train_set.len();
    let mut candidates = Vec::new();
    for &lambda in &grid.lambdas {
        let mut s = spec.clone();
        s.l2_lambda = lambda;
        let net = Network::new(s, seed)?;
        let (net, _) = train(&net, train_set, cfg)?;
        let mut predictions = Vec::with_capacity(validation.len());
        let mut sq = 0.0;
        for i in 0..validation.len() {
            let Target::Value(y) = validation.target(i) else {
                return Err(Error::InvalidArgument("regression targets required".into()));
            };
            let x = Tensor::new(spec.input_shape.to_vec(), validation.input(i).to_vec())?;
            let samples = mc_samples(&net, &x, passes, crate::rng::derive(seed, i as u64))?;
            let m = predictive_mean(&samples)?;
            sq += (m - y) * (m - y);
            let PassSamples::Regression(v) = samples else {
                unreachable!()
            };
            predictions.push((y, v));
        }
        let rmse = sqrt(sq / validation.len() as f64);
        for &l in &grid.length_scales {
            let tau = compute_tau(l, p_keep, n_train, lambda)?;
            let ll = predictions
                .iter()
                .map(|(y, v)| gaussian_mixture_ll(*y, v, tau))
                .sum::<f64>()
                / predictions.len() as f64;
            candidates.push(CalibrationCandidate {
                length_scale: l,
                lambda,
                tau,
                validation_rmse: rmse,
                validation_log_likelihood: ll,
            });
        }
    }
    let best = candidates
        .iter()
        .min_by(|a, b| {
            a.validation_rmse
                .total_cmp(&b.validation_rmse)
                .then(b.validation_log_likelihood.total_cmp(&a.validation_log_likelihood))
                .then(a.lambda.total_cmp(&b.lambda))
                .then(a.length_scale.total_cmp(&b.length_scale))
        })
        .expect("non-empty grid");
    Ok(Calibration {
        best: PrecisionParams::new(best.length_scale, p_keep, n_train, best.lambda)?,
        candidates,
    })
}

/// `log (1/T) sum_t N(y; yhat_t, 1/tau)`.
fn gaussian_mixture_ll(y: f64, samples: &[f64], tau: f64) -> f64 {
    let terms: Vec<f64> = samples.iter().map(|s| -0.5 * tau * (y - s) * (y - s)).collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + log(terms.iter().map(|t| exp(t - max)).sum::<f64>());
    lse - log(samples.len() as f64) - 0.5 * log(2.0 * PI) + 0.5 * log(tau)
}
