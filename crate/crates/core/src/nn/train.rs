use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::backprop::Gradients;
use super::loss::LossKind;
use super::network::Network;
use super::spec::Head;
use crate::rng::{derive, shuffle, stream_rng};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            loss: LossKind::MeanSquaredError,
        }
    }
}

/// Label of one training example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Regression target in network output units.
    Value(f64),
    /// Class index for a softmax head.
    Class(usize),
}

/// Indexed source of `(input, target)` pairs.
pub trait TrainingSet {
    fn len(&self) -> usize;
    fn input(&self, i: usize) -> &[f64];
    fn target(&self, i: usize) -> Target;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TrainingSet for [(Tensor, Target)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn input(&self, i: usize) -> &[f64] {
        self[i].0.data()
    }
    fn target(&self, i: usize) -> Target {
        self[i].1
    }
}

impl TrainingSet for Vec<(Tensor, Target)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn input(&self, i: usize) -> &[f64] {
        self[i].0.data()
    }
    fn target(&self, i: usize) -> Target {
        self[i].1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-example data loss of each epoch (dropout active) plus the
    /// L2 penalty at the end of that epoch.
    pub epoch_loss: Vec<f64>,
}

pub(crate) fn target_vector(head: Head, t: Target, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    match (head, t) {
        (Head::Regression, Target::Value(v)) if v.is_finite() => out.push(v),
        (Head::Classification { classes }, Target::Class(k)) if k < classes => {
            out.resize(classes, 0.0);
            out[k] = 1.0;
        }
        _ => {
            return Err(Error::InvalidArgument(alloc::format!(
                "label {t:?} does not fit a {} head",
                head.kind().name()
            )))
        }
    }
    Ok(())
}

/// Minibatch SGD on data loss + `lambda * sum ||W||^2`, dropout active.
pub fn train<D: TrainingSet + ?Sized>(
    net: &Network,
    data: &D,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    train_with_progress(net, data, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, loss)` after each epoch.
///
/// Epoch `e` shuffles with a stream derived from `(seed, e)`, and the
/// example at position `j` of that epoch draws its dropout masks from
/// stream `j`, so a run is a pure function of its inputs.
pub fn train_with_progress<D: TrainingSet + ?Sized>(
    net: &Network,
    data: &D,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(Network, TrainReport)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("epochs and batch_size must be positive".into()));
    }
    if cfg.batch_size > n {
        return Err(Error::InvalidArgument(alloc::format!(
            "batch size {} exceeds dataset size {n}",
            cfg.batch_size
        )));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let head = net.spec().head;
    if cfg.loss == LossKind::CategoricalCrossEntropy && head == Head::Regression {
        return Err(Error::InvalidArgument(
            "cross-entropy needs a classification head".into(),
        ));
    }
    let mut target = Vec::new();
    for i in 0..n {
        target_vector(head, data.target(i), &mut target)?;
    }

    let mut net = net.clone();
    let lambda = net.spec().l2_lambda;
    let last = net.spec().final_param_layer();
    let mut grads = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let epoch_seed = derive(cfg.seed, epoch as u64);
        let mut shuffler = stream_rng(epoch_seed, u64::MAX);
        order.sort_unstable();
        shuffle(&mut shuffler, &mut order);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.clear();
            for (j, &idx) in batch.iter().enumerate() {
                let pos = (b * cfg.batch_size + j) as u64;
                let mut rng = stream_rng(epoch_seed, pos);
                target_vector(head, data.target(idx), &mut target)?;
                let l = net.accumulate_gradient(
                    data.input(idx),
                    &target,
                    cfg.loss,
                    None,
                    Some(&mut rng),
                    &mut grads,
                )
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Diverged { epoch },
                    e => e,
                })?;
                loss_sum += l;
            }
            if !loss_sum.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let scale = 1.0 / batch.len() as f64;
            sgd_step(&mut net, &grads, scale, cfg.learning_rate, lambda, last);
        }
        let epoch_loss = loss_sum / n as f64 + net.l2_penalty();
        if !epoch_loss.is_finite() || net.params().iter().flatten().any(|p| !p.kernel.all_finite()) {
            return Err(Error::Diverged { epoch });
        }
        on_epoch(epoch, epoch_loss);
        history.push(epoch_loss);
    }
    Ok((net, TrainReport { epoch_loss: history }))
}

/// `w -= lr * (scale * g + 2 * lambda * w)`; L2 skips biases and the last parametric layer.
pub(crate) fn sgd_step(
    net: &mut Network,
    grads: &Gradients,
    scale: f64,
    lr: f64,
    lambda: f64,
    last: Option<usize>,
) {
    for (i, (p, g)) in net.params_mut().iter_mut().zip(&grads.layers).enumerate() {
        let (Some(p), Some(g)) = (p.as_mut(), g.as_ref()) else {
            continue;
        };
        let decay = if Some(i) == last { 0.0 } else { 2.0 * lambda };
        for (w, &gw) in p.kernel.data_mut().iter_mut().zip(g.kernel.data()) {
            *w -= lr * (scale * gw + decay * *w);
        }
        for (b, &gb) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
            *b -= lr * scale * gb;
        }
    }
}
