use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{conv_forward, dense_forward, ConvGeom};
use super::spec::{LayerSpec, NetworkSpec};
use crate::math::{softmax_into, sqrt};
use crate::rng::{stream_rng, uniform, StreamRng};
use crate::{Error, Result, Tensor};

/// Kernel and bias of a convolution or dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `[kh, kw, in_c, out_c]` for convolutions, `[in, out]` for dense layers.
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Whether dropout layers sample masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout layers are the identity.
    Deterministic,
    /// Dropout layers draw a fresh Bernoulli keep-mask (training-mode inference).
    Stochastic,
}

/// Explicit keep-masks, one per dropout layer in layer order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Masks {
    pub keep: Vec<Vec<bool>>,
}

/// Activations recorded during a forward pass, for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    /// `acts[i]` is the input of layer `i`; the last entry is the network output.
    pub acts: Vec<Vec<f64>>,
    /// Keep-mask of each dropout layer, `None` where nothing was dropped.
    pub keep: Vec<Option<Vec<bool>>>,
}

pub(crate) enum MaskSource<'a> {
    Off,
    Sample(&'a mut StreamRng),
    Given(&'a Masks),
}

/// A network architecture together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Option<LayerParams>>,
    shapes: Vec<Vec<usize>>,
    geoms: Vec<Option<ConvGeom>>,
    dropout_ordinal: Vec<Option<usize>>,
}

fn param_shapes(layer: &LayerSpec, in_shape: &[usize]) -> Option<(Vec<usize>, usize)> {
    match *layer {
        LayerSpec::Conv {
            filters, kernel, ..
        } => Some((vec![kernel[0], kernel[1], in_shape[2], filters], filters)),
        LayerSpec::Dense { units } => Some((vec![in_shape[0], units], units)),
        _ => None,
    }
}

impl Network {
    /// Builds a network with Glorot-uniform kernels and zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            params.push(param_shapes(layer, &shapes[i]).map(|(kshape, units)| {
                let receptive: usize = kshape[..kshape.len() - 2].iter().product();
                let fan_in = receptive * kshape[kshape.len() - 2];
                let fan_out = receptive * kshape[kshape.len() - 1];
                let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
                let mut rng = stream_rng(seed, i as u64);
                let n: usize = kshape.iter().product();
                let data = (0..n)
                    .map(|_| (2.0 * uniform(&mut rng) - 1.0) * limit)
                    .collect();
                LayerParams {
                    kernel: Tensor::new(kshape, data).expect("consistent kernel shape"),
                    bias: Tensor::zeros(vec![units]),
                }
            }));
        }
        Ok(Self::assemble(spec, params, shapes))
    }

    /// Wraps existing parameters, checking every shape against `spec`.
    pub fn from_params(spec: NetworkSpec, params: Vec<Option<LayerParams>>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::InvalidSpec(format!(
                "{} parameter slots for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            match (param_shapes(layer, &shapes[i]), p) {
                (None, None) => {}
                (Some((kshape, units)), Some(p)) => {
                    if p.kernel.shape() != kshape.as_slice() || p.bias.shape() != [units] {
                        return Err(Error::ShapeMismatch {
                            expected: kshape,
                            actual: p.kernel.shape().to_vec(),
                        });
                    }
                    if !p.kernel.all_finite() || !p.bias.all_finite() {
                        return Err(Error::NonFinite("network parameters"));
                    }
                }
                _ => {
                    return Err(Error::InvalidSpec(format!(
                        "layer {i}: parameter presence does not match layer kind"
                    )))
                }
            }
        }
        Ok(Self::assemble(spec, params, shapes))
    }

    fn assemble(spec: NetworkSpec, params: Vec<Option<LayerParams>>, shapes: Vec<Vec<usize>>) -> Self {
        let geoms = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match *l {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                } => Some(ConvGeom {
                    h: shapes[i][0],
                    w: shapes[i][1],
                    c: shapes[i][2],
                    kh: kernel[0],
                    kw: kernel[1],
                    sh: stride[0],
                    sw: stride[1],
                    oh: shapes[i + 1][0],
                    ow: shapes[i + 1][1],
                    f: filters,
                }),
                _ => None,
            })
            .collect();
        let mut next = 0;
        let dropout_ordinal = spec
            .layers
            .iter()
            .map(|l| {
                matches!(l, LayerSpec::Dropout { .. }).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self {
            spec,
            params,
            shapes,
            geoms,
            dropout_ordinal,
        }
    }

    pub(crate) fn conv_geom(&self, i: usize) -> ConvGeom {
        self.geoms[i].expect("conv geometry")
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    /// Activation shapes, input first.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.kernel.len() + p.bias.len())
            .sum()
    }

    /// `(layer index, unit count, p_drop)` for every dropout layer.
    pub fn dropout_units(&self) -> Vec<(usize, usize, f64)> {
        self.spec
            .dropout_layers()
            .map(|(i, p)| (i, self.shapes[i].iter().product(), p))
            .collect()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_len() {
            return Err(Error::ShapeMismatch {
                expected: self.spec.input_shape.to_vec(),
                actual: vec![input.len()],
            });
        }
        Ok(())
    }

    /// Runs the network. Deterministic mode ignores `seed`; stochastic mode
    /// draws dropout masks from stream 0 of `seed`.
    pub fn forward(&self, input: &Tensor, mode: Mode, seed: u64) -> Result<Tensor> {
        if input.shape() != self.spec.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.spec.input_shape.to_vec(),
                actual: input.shape().to_vec(),
            });
        }
        let out = match mode {
            Mode::Deterministic => self.forward_flat(input.data(), None)?,
            Mode::Stochastic => {
                let mut rng = stream_rng(seed, 0);
                self.forward_flat(input.data(), Some(&mut rng))?
            }
        };
        Ok(Tensor::from_vec(out))
    }

    /// Forward pass over a flat input; `rng` switches dropout on.
    pub fn forward_flat(&self, input: &[f64], rng: Option<&mut StreamRng>) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let src = match rng {
            Some(r) => MaskSource::Sample(r),
            None => MaskSource::Off,
        };
        self.run(0, input.to_vec(), src, None)
    }

    /// Forward pass with explicit keep-masks.
    pub fn forward_masked(&self, input: &[f64], masks: &Masks) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let n_dropout = self.spec.dropout_layers().count();
        if masks.keep.len() != n_dropout {
            return Err(Error::ShapeMismatch {
                expected: vec![n_dropout],
                actual: vec![masks.keep.len()],
            });
        }
        for ((layer, units, _), m) in self.dropout_units().into_iter().zip(&masks.keep) {
            if m.len() != units {
                return Err(Error::InvalidArgument(format!(
                    "mask for layer {layer} has {} entries, expected {units}",
                    m.len()
                )));
            }
        }
        self.run(0, input.to_vec(), MaskSource::Given(masks), None)
    }

    /// Runs the layers before the first dropout that can drop anything.
    ///
    /// Returns the layer index to resume from and the activation there.
    /// Every stochastic pass shares this prefix.
    pub fn deterministic_prefix(&self, input: &[f64]) -> Result<(usize, Vec<f64>)> {
        self.check_input(input)?;
        let stop = self
            .spec
            .first_active_dropout()
            .unwrap_or(self.spec.layers.len());
        let act = self.run_range(0, stop, input.to_vec(), &mut MaskSource::Off, None)?;
        Ok((stop, act))
    }

    /// Continues a stochastic pass from a [`Network::deterministic_prefix`] result.
    pub fn stochastic_from(&self, start: usize, act: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.run(start, act.to_vec(), MaskSource::Sample(rng), None)
    }

    pub(crate) fn forward_traced(&self, input: &[f64], src: MaskSource<'_>) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut trace = ForwardTrace {
            acts: Vec::with_capacity(self.spec.layers.len() + 1),
            keep: vec![None; self.spec.layers.len()],
        };
        let out = self.run(0, input.to_vec(), src, Some(&mut trace))?;
        trace.acts.push(out);
        Ok(trace)
    }

    fn run(
        &self,
        start: usize,
        act: Vec<f64>,
        mut src: MaskSource<'_>,
        trace: Option<&mut ForwardTrace>,
    ) -> Result<Vec<f64>> {
        let out = self.run_range(start, self.spec.layers.len(), act, &mut src, trace)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(out)
    }

    fn run_range(
        &self,
        start: usize,
        stop: usize,
        mut act: Vec<f64>,
        src: &mut MaskSource<'_>,
        mut trace: Option<&mut ForwardTrace>,
    ) -> Result<Vec<f64>> {
        let mut scratch = Vec::new();
        for i in start..stop {
            let layer = &self.spec.layers[i];
            let out_len: usize = self.shapes[i + 1].iter().product();
            match *layer {
                LayerSpec::Conv { .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    scratch.clear();
                    scratch.resize(out_len, 0.0);
                    let g = self.geoms[i].as_ref().expect("conv geometry");
                    conv_forward(g, &act, p.kernel.data(), p.bias.data(), &mut scratch);
                    swap_record(&mut act, &mut scratch, trace.as_deref_mut());
                }
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    scratch.clear();
                    scratch.resize(out_len, 0.0);
                    dense_forward(&act, p.kernel.data(), p.bias.data(), &mut scratch);
                    swap_record(&mut act, &mut scratch, trace.as_deref_mut());
                }
                LayerSpec::Relu => {
                    record(&act, trace.as_deref_mut());
                    for v in act.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                LayerSpec::Flatten => record(&act, trace.as_deref_mut()),
                LayerSpec::Softmax => {
                    scratch.clear();
                    softmax_into(&act, &mut scratch);
                    swap_record(&mut act, &mut scratch, trace.as_deref_mut());
                }
                LayerSpec::Dropout { p_drop } => {
                    record(&act, trace.as_deref_mut());
                    let keep = match src {
                        MaskSource::Off => None,
                        _ if p_drop == 0.0 => None,
                        MaskSource::Sample(rng) => Some(
                            (0..act.len())
                                .map(|_| uniform(&mut **rng) >= p_drop)
                                .collect::<Vec<_>>(),
                        ),
                        MaskSource::Given(m) => {
                            Some(m.keep[self.dropout_ordinal[i].expect("dropout ordinal")].clone())
                        }
                    };
                    if let Some(keep) = keep {
                        let scale = 1.0 / (1.0 - p_drop);
                        for (v, &k) in act.iter_mut().zip(&keep) {
                            *v = if k { *v * scale } else { 0.0 };
                        }
                        if let Some(t) = trace.as_deref_mut() {
                            t.keep[i] = Some(keep);
                        }
                    }
                }
            }
        }
        Ok(act)
    }
}

fn record(act: &[f64], trace: Option<&mut ForwardTrace>) {
    if let Some(t) = trace {
        t.acts.push(act.to_vec());
    }
}

fn swap_record(act: &mut Vec<f64>, scratch: &mut Vec<f64>, trace: Option<&mut ForwardTrace>) {
    core::mem::swap(act, scratch);
    if let Some(t) = trace {
        t.acts.push(core::mem::take(scratch));
    }
}
