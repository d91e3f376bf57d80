use alloc::vec;
use alloc::vec::Vec;

use super::layers::{conv_backward, dense_backward};
use super::loss::{flat_loss, flat_loss_grad, LossKind};
use super::network::{ForwardTrace, LayerParams, MaskSource, Masks, Network};
use super::spec::LayerSpec;
use crate::rng::StreamRng;
use crate::{Error, Result, Tensor};

/// Parameter gradients, laid out like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<LayerParams>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .params()
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| LayerParams {
                        kernel: Tensor::zeros(p.kernel.shape().to_vec()),
                        bias: Tensor::zeros(p.bias.shape().to_vec()),
                    })
                })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for p in self.layers.iter_mut().flatten() {
            p.kernel.data_mut().fill(0.0);
            p.bias.data_mut().fill(0.0);
        }
    }

    /// All gradient entries in parameter order (kernel then bias per layer).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| p.kernel.data().iter().chain(p.bias.data()).copied())
            .collect()
    }
}

impl Network {
    /// Data loss of one example, adding its gradient into `grads`.
    ///
    /// With `masks` the given keep-masks are applied; with `rng` fresh masks
    /// are sampled; with neither, dropout is off. The L2 penalty is not
    /// included; see [`Network::l2_penalty`].
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        target: &[f64],
        kind: LossKind,
        masks: Option<&Masks>,
        rng: Option<&mut StreamRng>,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let src = match (masks, rng) {
            (Some(m), _) => MaskSource::Given(m),
            (None, Some(r)) => MaskSource::Sample(r),
            (None, None) => MaskSource::Off,
        };
        let trace = self.forward_traced(input, src)?;
        let out = trace.acts.last().unwrap();
        if out.len() != target.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![out.len()],
                actual: vec![target.len()],
            });
        }
        let loss = flat_loss(out, target, kind);
        let layers = &self.spec().layers;
        let n = layers.len();
        // Softmax followed by cross-entropy: the gradient at the logits is p - t.
        let (start, grad) = if kind == LossKind::CategoricalCrossEntropy
            && matches!(layers.last(), Some(LayerSpec::Softmax))
        {
            (n - 1, out.iter().zip(target).map(|(p, t)| p - t).collect())
        } else {
            (n, flat_loss_grad(out, target, kind))
        };
        self.backward(&trace, start, grad, grads);
        Ok(loss)
    }

    /// Backpropagates `grad` (gradient w.r.t. the output of layer `start - 1`).
    fn backward(&self, trace: &ForwardTrace, start: usize, mut grad: Vec<f64>, grads: &mut Gradients) {
        let layers = &self.spec().layers;
        let first_param = layers.iter().position(LayerSpec::has_params).unwrap_or(0);
        for i in (0..start).rev() {
            let input = &trace.acts[i];
            let need_input_grad = i > first_param;
            match layers[i] {
                LayerSpec::Conv { .. } | LayerSpec::Dense { .. } => {
                    let p = self.params()[i].as_ref().expect("params");
                    let g = grads.layers[i].as_mut().expect("gradient slot");
                    let mut gin = if need_input_grad {
                        Some(vec![0.0; input.len()])
                    } else {
                        None
                    };
                    if let LayerSpec::Conv { .. } = layers[i] {
                        let geom = self.conv_geom(i);
                        conv_backward(
                            &geom,
                            input,
                            p.kernel.data(),
                            &grad,
                            g.kernel.data_mut(),
                            g.bias.data_mut(),
                            gin.as_deref_mut(),
                        );
                    } else {
                        dense_backward(
                            input,
                            p.kernel.data(),
                            &grad,
                            g.kernel.data_mut(),
                            g.bias.data_mut(),
                            gin.as_deref_mut(),
                        );
                    }
                    match gin {
                        Some(v) => grad = v,
                        None => return,
                    }
                }
                LayerSpec::Relu => {
                    for (g, &x) in grad.iter_mut().zip(input) {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                LayerSpec::Flatten => {}
                LayerSpec::Dropout { p_drop } => {
                    if let Some(keep) = &trace.keep[i] {
                        let scale = 1.0 / (1.0 - p_drop);
                        for (g, &k) in grad.iter_mut().zip(keep) {
                            *g = if k { *g * scale } else { 0.0 };
                        }
                    }
                }
                LayerSpec::Softmax => {
                    let p = &trace.acts[i + 1];
                    let dotp: f64 = grad.iter().zip(p).map(|(g, p)| g * p).sum();
                    for (g, &pi) in grad.iter_mut().zip(p) {
                        *g = pi * (*g - dotp);
                    }
                }
            }
        }
    }

    /// `sum ||W||^2` over the kernels of every parametric layer but the last.
    pub fn l2_sum(&self) -> f64 {
        let last = self.spec().final_param_layer();
        self.params()
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != last)
            .filter_map(|(_, p)| p.as_ref())
            .map(|p| p.kernel.data().iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// `lambda * sum ||W||^2`.
    pub fn l2_penalty(&self) -> f64 {
        self.spec().l2_lambda * self.l2_sum()
    }
}
