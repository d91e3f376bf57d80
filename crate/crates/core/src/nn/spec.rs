use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One layer of a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Valid-padding 2-D convolution over a `[h, w, c]` input.
    Conv {
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
    },
    /// Fully connected layer over a flat input.
    Dense { units: usize },
    Relu,
    Softmax,
    /// Inverted dropout: zero with probability `p_drop`, scale survivors by `1 / (1 - p_drop)`.
    Dropout { p_drop: f64 },
    Flatten,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Regression,
    Classification,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Regression => "regression",
            HeadKind::Classification => "classification",
        }
    }
}

/// Output head of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Head {
    /// A single linear output unit.
    Regression,
    /// A softmax over `classes` outputs.
    Classification { classes: usize },
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Regression => HeadKind::Regression,
            Head::Classification { .. } => HeadKind::Classification,
        }
    }

    pub fn outputs(&self) -> usize {
        match *self {
            Head::Regression => 1,
            Head::Classification { classes } => classes,
        }
    }
}

/// Architecture of a network: input shape, layer list, head and L2 weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// `[height, width, channels]`.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub head: Head,
    /// Multiplier of the squared-weight penalty on every parametric layer but the last.
    pub l2_lambda: f64,
}

impl NetworkSpec {
    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Activation shapes: entry 0 is the input, entry `i + 1` the output of layer `i`.
    ///
    /// Fails if any layer is ill-formed or shapes do not chain, or if the
    /// layer stack does not end the way the head requires.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidSpec(format!(
                "input shape {:?} has a zero dimension",
                self.input_shape
            )));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "l2_lambda {} must be finite and nonnegative",
                self.l2_lambda
            )));
        }
        let mut shapes = vec![self.input_shape.to_vec()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().unwrap();
            let next = match *layer {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                } => {
                    let &[h, w, _c] = cur.as_slice() else {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: convolution needs a [h, w, c] input, got {cur:?}"
                        )));
                    };
                    if filters == 0 || kernel.contains(&0) || stride.contains(&0) {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: convolution dimensions must be positive"
                        )));
                    }
                    if kernel[0] > h || kernel[1] > w {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: kernel {kernel:?} does not fit input {cur:?}"
                        )));
                    }
                    vec![
                        (h - kernel[0]) / stride[0] + 1,
                        (w - kernel[1]) / stride[1] + 1,
                        filters,
                    ]
                }
                LayerSpec::Dense { units } => {
                    if cur.len() != 1 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: dense layer needs a flat input, got {cur:?}"
                        )));
                    }
                    if units == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: dense layer needs at least one unit"
                        )));
                    }
                    vec![units]
                }
                LayerSpec::Flatten => vec![cur.iter().product()],
                LayerSpec::Relu => cur.clone(),
                LayerSpec::Softmax => {
                    if cur.len() != 1 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: softmax needs a flat input"
                        )));
                    }
                    cur.clone()
                }
                LayerSpec::Dropout { p_drop } => {
                    if !(0.0..1.0).contains(&p_drop) {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: dropout probability {p_drop} outside [0, 1)"
                        )));
                    }
                    cur.clone()
                }
            };
            shapes.push(next);
        }
        self.check_head(&shapes)?;
        Ok(shapes)
    }

    fn check_head(&self, shapes: &[Vec<usize>]) -> Result<()> {
        let n = self.layers.len();
        let out = shapes.last().unwrap();
        match self.head {
            Head::Regression => {
                if !matches!(self.layers.last(), Some(LayerSpec::Dense { units: 1 })) {
                    return Err(Error::InvalidSpec(
                        "regression head must end in a single linear unit".into(),
                    ));
                }
            }
            Head::Classification { classes } => {
                let ok = n >= 2
                    && matches!(self.layers[n - 1], LayerSpec::Softmax)
                    && self.layers[n - 2] == LayerSpec::Dense { units: classes };
                if !ok || classes < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "classification head must end in a {classes}-unit dense layer and softmax"
                    )));
                }
            }
        }
        if out.as_slice() != [self.head.outputs()] {
            return Err(Error::InvalidSpec(format!(
                "output shape {out:?} does not match head"
            )));
        }
        Ok(())
    }

    /// Index of the last parametric layer, which is exempt from L2.
    pub fn final_param_layer(&self) -> Option<usize> {
        self.layers.iter().rposition(LayerSpec::has_params)
    }

    pub fn dropout_layers(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.layers.iter().enumerate().filter_map(|(i, l)| match *l {
            LayerSpec::Dropout { p_drop } => Some((i, p_drop)),
            _ => None,
        })
    }

    /// Index of the first dropout layer that can drop anything.
    pub fn first_active_dropout(&self) -> Option<usize> {
        self.dropout_layers()
            .find(|&(_, p)| p > 0.0)
            .map(|(i, _)| i)
    }

    /// Copy of this spec with every dropout probability replaced.
    pub fn with_p_drop(&self, p_drop: f64) -> Self {
        let mut s = self.clone();
        for l in &mut s.layers {
            if let LayerSpec::Dropout { p_drop: p } = l {
                *p = p_drop;
            }
        }
        s
    }
}
