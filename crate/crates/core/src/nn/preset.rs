use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::spec::{Head, HeadKind, LayerSpec, NetworkSpec};
use crate::data::NUM_CLASSES;

/// Dropout probability inserted after every parametric layer but the first and last.
pub const DEFAULT_P_DROP: f64 = 0.05;
/// L2 multiplier of the presets.
pub const DEFAULT_L2_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetScale {
    /// 66x200x3 input, five convolutions (24-36-48-64-64) and dense 100-50-10.
    Full,
    /// 33x100x3 input and half the convolution channels; same dense head.
    Fast,
}

/// PilotNet-style steering network.
///
/// Both heads share the trunk. Each parametric layer is followed by ReLU
/// (except the output layer) and, except for the first and the last, by
/// dropout with `p_drop = 0.05`. At fast scale the second and third
/// convolutions use 3x3 kernels (stride 2, then 1) because three strided
/// 5x5 convolutions would leave no room for the final 3x3 pair on a
/// 33-pixel-high input.
pub fn build_preset(kind: HeadKind, scale: PresetScale) -> NetworkSpec {
    let (input_shape, convs): ([usize; 3], Vec<(usize, usize, usize)>) = match scale {
        PresetScale::Full => (
            [66, 200, 3],
            vec![(24, 5, 2), (36, 5, 2), (48, 5, 2), (64, 3, 1), (64, 3, 1)],
        ),
        PresetScale::Fast => (
            [33, 100, 3],
            vec![(12, 5, 2), (18, 3, 2), (24, 3, 1), (32, 3, 1), (32, 3, 1)],
        ),
    };
    let dense = [100, 50, 10];
    let mut layers = Vec::new();
    let mut first = true;
    let mut hidden = |layers: &mut Vec<LayerSpec>, l: LayerSpec| {
        layers.push(l);
        layers.push(LayerSpec::Relu);
        if !first {
            layers.push(LayerSpec::Dropout {
                p_drop: DEFAULT_P_DROP,
            });
        }
        first = false;
    };
    for (i, &(filters, k, s)) in convs.iter().enumerate() {
        hidden(
            &mut layers,
            LayerSpec::Conv {
                filters,
                kernel: [k, k],
                stride: [s, s],
            },
        );
        if i == convs.len() - 1 {
            layers.push(LayerSpec::Flatten);
        }
    }
    for units in dense {
        hidden(&mut layers, LayerSpec::Dense { units });
    }
    let head = match kind {
        HeadKind::Regression => {
            layers.push(LayerSpec::Dense { units: 1 });
            Head::Regression
        }
        HeadKind::Classification => {
            layers.push(LayerSpec::Dense { units: NUM_CLASSES });
            layers.push(LayerSpec::Softmax);
            Head::Classification {
                classes: NUM_CLASSES,
            }
        }
    };
    NetworkSpec {
        input_shape,
        layers,
        head,
        l2_lambda: DEFAULT_L2_LAMBDA,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_head_is_200_way_softmax() {
        let spec = build_preset(HeadKind::Classification, PresetScale::Full);
        assert_eq!(spec.head, Head::Classification { classes: 200 });
        assert_eq!(spec.layers.last(), Some(&LayerSpec::Softmax));
        assert_eq!(spec.shapes().unwrap().last().unwrap(), &vec![200]);
    }

    #[test]
    fn dropout_after_all_but_first_and_last() {
        for scale in [PresetScale::Full, PresetScale::Fast] {
            for kind in [HeadKind::Regression, HeadKind::Classification] {
                let spec = build_preset(kind, scale);
                let weight_layers = spec.layers.iter().filter(|l| l.has_params()).count();
                let dropouts: Vec<_> = spec.dropout_layers().collect();
                assert_eq!(dropouts.len(), weight_layers - 2);
                assert!(dropouts.iter().all(|&(_, p)| p == 0.05));
                assert_eq!(spec.l2_lambda, 1e-6);
                spec.shapes().unwrap();
            }
        }
    }

    #[test]
    fn full_scale_flattens_to_1152() {
        let spec = build_preset(HeadKind::Regression, PresetScale::Full);
        let shapes = spec.shapes().unwrap();
        assert!(shapes.contains(&vec![1152]));
        assert!(shapes.contains(&vec![1, 18, 64]));
    }

    #[test]
    fn fast_scale_input() {
        let spec = build_preset(HeadKind::Regression, PresetScale::Fast);
        assert_eq!(spec.input_shape, [33, 100, 3]);
    }
}
