use dropdrive_core::nn::{Gradients, Head, LayerSpec, LossKind, Masks, Network, NetworkSpec};
use dropdrive_core::rng::{stream_rng, uniform};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn small_spec(head: Head) -> NetworkSpec {
    let mut layers = vec![
        LayerSpec::Conv {
            filters: 3,
            kernel: [3, 3],
            stride: [1, 1],
        },
        LayerSpec::Relu,
        LayerSpec::Conv {
            filters: 4,
            kernel: [2, 3],
            stride: [2, 1],
        },
        LayerSpec::Relu,
        LayerSpec::Dropout { p_drop: 0.3 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 6 },
        LayerSpec::Relu,
        LayerSpec::Dropout { p_drop: 0.2 },
    ];
    match head {
        Head::Regression => layers.push(LayerSpec::Dense { units: 1 }),
        Head::Classification { classes } => {
            layers.push(LayerSpec::Dense { units: classes });
            layers.push(LayerSpec::Softmax);
        }
    }
    NetworkSpec {
        input_shape: [6, 7, 2],
        layers,
        head,
        l2_lambda: 0.0,
    }
}

fn random_vec(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    (0..n).map(|_| scale * (2.0 * uniform(&mut rng) - 1.0)).collect()
}

fn fixed_masks(net: &Network, seed: u64) -> Masks {
    let mut rng = stream_rng(seed, 1);
    Masks {
        keep: net
            .dropout_units()
            .iter()
            .map(|&(_, units, p)| (0..units).map(|_| uniform(&mut rng) >= p).collect())
            .collect(),
    }
}

fn loss_at(net: &Network, input: &[f64], target: &[f64], kind: LossKind, masks: &Masks) -> f64 {
    let mut g = Gradients::zeros_like(net);
    net.accumulate_gradient(input, target, kind, Some(masks), None, &mut g).unwrap()
}

fn check(head: Head, kind: LossKind, target: Vec<f64>, seed: u64) -> f64 {
    let net = Network::new(small_spec(head), seed).unwrap();
    let input = random_vec(seed + 100, 6 * 7 * 2, 1.0);
    let masks = fixed_masks(&net, seed);
    let mut grads = Gradients::zeros_like(&net);
    net.accumulate_gradient(&input, &target, kind, Some(&masks), None, &mut grads)
        .unwrap();
    let analytic = grads.flatten();

    let mut worst: f64 = 0.0;
    let mut k = 0;
    for li in 0..net.params().len() {
        let Some(p) = &net.params()[li] else { continue };
        for (which, len) in [(0, p.kernel.len()), (1, p.bias.len())] {
            for j in 0..len {
                let perturbed = |delta: f64| {
                    let mut params = net.params().to_vec();
                    let lp = params[li].as_mut().unwrap();
                    let t = if which == 0 { &mut lp.kernel } else { &mut lp.bias };
                    t.data_mut()[j] += delta;
                    Network::from_params(net.spec().clone(), params).unwrap()
                };
                let up = loss_at(&perturbed(H), &input, &target, kind, &masks);
                let down = loss_at(&perturbed(-H), &input, &target, kind, &masks);
                let numeric = (up - down) / (2.0 * H);
                let a = analytic[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                k += 1;
            }
        }
    }
    assert_eq!(k, analytic.len());
    worst
}

#[test]
fn regression_mse_gradients_match_finite_differences() {
    for seed in 0..3 {
        let worst = check(Head::Regression, LossKind::MeanSquaredError, vec![0.3], seed);
        assert!(worst <= TOL, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn softmax_cross_entropy_gradients_match_finite_differences() {
    for seed in 0..3 {
        let mut target = vec![0.0; 5];
        target[seed as usize + 1] = 1.0;
        let worst = check(
            Head::Classification { classes: 5 },
            LossKind::CategoricalCrossEntropy,
            target,
            seed,
        );
        assert!(worst <= TOL, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn l2_penalty_gradient_is_two_lambda_w() {
    let mut spec = small_spec(Head::Regression);
    spec.l2_lambda = 0.01;
    let net = Network::new(spec, 4).unwrap();
    let base = net.l2_penalty();
    let last = net.spec().final_param_layer().unwrap();
    for (li, p) in net.params().iter().enumerate() {
        let Some(p) = p else { continue };
        for j in [0, p.kernel.len() - 1] {
            let mut params = net.params().to_vec();
            params[li].as_mut().unwrap().kernel.data_mut()[j] += H;
            let up = Network::from_params(net.spec().clone(), params).unwrap().l2_penalty();
            let numeric = (up - base) / H;
            let expected = if li == last {
                0.0
            } else {
                2.0 * 0.01 * p.kernel.data()[j]
            };
            assert!((numeric - expected).abs() <= 1e-6, "layer {li}: {numeric} vs {expected}");
        }
    }
}
