use super::*;
use crate::nn::{LayerSpec, NetworkSpec};
use crate::rng::{below, stream_rng, uniform};
use core::f64::consts::LN_2;
use proptest::prelude::*;

fn one_hot_rows(labels: &[usize], classes: usize) -> PassSamples {
    let mut probs = vec![0.0; labels.len() * classes];
    for (t, &c) in labels.iter().enumerate() {
        probs[t * classes + c] = 1.0;
    }
    PassSamples::classification(classes, probs).unwrap()
}

pub(crate) fn tiny_classifier(hidden: usize, p: f64, seed: u64) -> Network {
    let spec = NetworkSpec {
        input_shape: [1, 1, 3],
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: hidden },
            LayerSpec::Relu,
            LayerSpec::Dropout { p_drop: p },
            LayerSpec::Dense { units: 4 },
            LayerSpec::Softmax,
        ],
        head: Head::Classification { classes: 4 },
        l2_lambda: 0.0,
    };
    Network::new(spec, seed).unwrap()
}

fn tiny_input() -> Tensor {
    Tensor::new(vec![1, 1, 3], vec![1.5, -2.0, 0.8]).unwrap()
}

#[test]
fn predictive_mean_examples() {
    let s = PassSamples::regression(vec![1.0, 2.0, 3.0]).unwrap();
    assert_eq!(predictive_mean(&s).unwrap(), 2.0);
    let s = PassSamples::regression(vec![0.37; 9]).unwrap();
    assert_eq!(predictive_mean(&s).unwrap(), 0.37);
}

#[test]
fn predictive_mean_matches_reverse_kahan_sum() {
    let mut rng = stream_rng(31, 0);
    let v: Vec<f64> = (0..128).map(|_| 50.0 * uniform(&mut rng) - 25.0).collect();
    // Oracle: compensated summation in reverse order.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in v.iter().rev() {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let oracle = sum / 128.0;
    let m = predictive_mean(&PassSamples::regression(v).unwrap()).unwrap();
    assert!((m - oracle).abs() <= 1e-12);
}

#[test]
fn predictive_variance_examples() {
    let tau = 0.00328;
    let s = PassSamples::regression(vec![4.2; 128]).unwrap();
    let v = predictive_variance(&s, tau).unwrap();
    assert_eq!(v, 1.0 / tau);
    assert!((v - 304.878_048_780_487_8).abs() < 1e-9);

    let s = PassSamples::regression(vec![1.0, 3.0]).unwrap();
    let big_tau = 1e300;
    assert!((predictive_variance(&s, big_tau).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn predictive_variance_matches_two_pass_oracle() {
    let mut rng = stream_rng(77, 1);
    let v: Vec<f64> = (0..128).map(|_| 10.0 * uniform(&mut rng) - 3.0).collect();
    let tau = 0.5;
    let mean = v.iter().sum::<f64>() / 128.0;
    let oracle = 1.0 / tau + v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 128.0;
    let got = predictive_variance(&PassSamples::regression(v).unwrap(), tau).unwrap();
    assert!((got - oracle).abs() <= 1e-10);
}

#[test]
fn predictive_variance_errors() {
    let s = PassSamples::regression(vec![1.0]).unwrap();
    assert!(predictive_variance(&s, 0.0).is_err());
    assert!(predictive_variance(&s, -1.0).is_err());
    let c = one_hot_rows(&[0, 1], 2);
    assert!(matches!(predictive_variance(&c, 1.0), Err(Error::WrongKind { .. })));
    assert!(matches!(predictive_mean(&c), Err(Error::WrongKind { .. })));
    let r = PassSamples::regression(vec![1.0]).unwrap();
    assert!(variation_ratio(&r).is_err());
    assert!(predictive_entropy(&r).is_err());
    assert!(mutual_information(&r).is_err());
    assert!(mode_and_freq(&r).is_err());
}

#[test]
fn single_pass_variance_is_noise_floor() {
    let s = PassSamples::regression(vec![0.123]).unwrap();
    assert_eq!(predictive_variance(&s, 2.0).unwrap(), 0.5);
}

#[test]
fn compute_tau_examples() {
    assert_eq!(compute_tau(1.0, 1.0, 1, 0.5).unwrap(), 1.0);
    let base = compute_tau(0.3, 0.9, 100, 1e-3).unwrap();
    assert!((compute_tau(0.3, 0.9, 100, 2e-3).unwrap() - base / 2.0).abs() < 1e-15);
    assert!((compute_tau(0.6, 0.9, 100, 1e-3).unwrap() - base * 4.0).abs() < 1e-12);
    // 1e-4 * 0.95 / (2 * 19597 * 1e-6) = 9.5e-5 / 0.039194
    let t = compute_tau(0.01, 0.95, 19597, 1e-6).unwrap();
    assert!((t - 9.5e-5 / 0.039194).abs() < 1e-15);
    assert!((t - 0.0024239).abs() < 1e-7);
    assert!(compute_tau(0.0, 1.0, 1, 1.0).is_err());
    assert!(compute_tau(1.0, 1.5, 1, 1.0).is_err());
    assert!(compute_tau(1.0, 1.0, 0, 1.0).is_err());
    assert!(compute_tau(1.0, 1.0, 1, 0.0).is_err());
}

#[test]
fn mode_and_freq_examples() {
    assert_eq!(mode_and_freq(&one_hot_rows(&[2, 2, 7, 2], 10)).unwrap(), (2, 3));
    assert_eq!(mode_and_freq(&one_hot_rows(&[1, 1, 2, 2], 10)).unwrap(), (1, 2));
    assert_eq!(mode_and_freq(&one_hot_rows(&[5; 6], 10)).unwrap(), (5, 6));
}

#[test]
fn variation_ratio_examples() {
    assert_eq!(variation_ratio(&one_hot_rows(&[3; 8], 5)).unwrap(), 0.0);
    let mut labels = vec![0usize; 96];
    labels.extend((0..32).map(|i| 1 + i % 3));
    assert_eq!(variation_ratio(&one_hot_rows(&labels, 4)).unwrap(), 0.25);
}

#[test]
fn variation_ratio_uniform_labels_matches_multinomial_simulation() {
    let (t, c) = (10_000usize, 200usize);
    let mut rng = stream_rng(5, 0);
    let labels: Vec<usize> = (0..t).map(|_| below(&mut rng, c)).collect();
    let vr = variation_ratio(&one_hot_rows(&labels, c)).unwrap();

    // Oracle: Monte-Carlo estimate of E[max multinomial count].
    let mut oracle_rng = stream_rng(999, 3);
    let reps = 200;
    let mut max_sum = 0usize;
    for _ in 0..reps {
        let mut counts = vec![0usize; c];
        for _ in 0..t {
            counts[below(&mut oracle_rng, c)] += 1;
        }
        max_sum += counts.into_iter().max().unwrap();
    }
    let expected = 1.0 - (max_sum as f64 / reps as f64) / t as f64;
    assert!((vr - expected).abs() < 0.01, "vr {vr} vs {expected}");
}

#[test]
fn entropy_examples() {
    assert_eq!(predictive_entropy(&one_hot_rows(&[4; 5], 200)).unwrap(), 0.0);
    let uniform = PassSamples::classification(200, vec![1.0 / 200.0; 400]).unwrap();
    assert!((predictive_entropy(&uniform).unwrap() - 200f64.ln()).abs() < 1e-9);
    assert!((predictive_entropy(&uniform).unwrap() - 5.29832).abs() < 1e-5);
    let split = one_hot_rows(&[0, 1], 2);
    assert!((predictive_entropy(&split).unwrap() - LN_2).abs() < 1e-12);
}

#[test]
fn mutual_information_examples() {
    let row = [0.1, 0.6, 0.3];
    let rows: Vec<f64> = row.iter().cycle().take(3 * 50).copied().collect();
    let s = PassSamples::classification(3, rows).unwrap();
    assert_eq!(mutual_information(&s).unwrap(), 0.0);

    let s = one_hot_rows(&[0, 1, 0, 1, 1, 0], 2);
    assert!((mutual_information(&s).unwrap() - LN_2).abs() < 1e-12);

    let s = PassSamples::classification(200, vec![1.0 / 200.0; 200 * 16]).unwrap();
    assert!(mutual_information(&s).unwrap().abs() < 1e-12);
}

#[test]
fn classification_rows_validated() {
    assert!(PassSamples::classification(2, vec![0.5, 0.6]).is_err());
    assert!(PassSamples::classification(2, vec![1.5, -0.5]).is_err());
    assert!(PassSamples::classification(3, vec![0.5, 0.5]).is_err());
    assert!(PassSamples::regression(vec![]).is_err());
}

#[test]
fn mc_samples_without_dropout_repeat_deterministic_output() {
    let net = tiny_classifier(6, 0.0, 2);
    let x = tiny_input();
    let det = net.forward(&x, crate::nn::Mode::Deterministic, 0).unwrap();
    let s = mc_samples(&net, &x, 7, 3).unwrap();
    let PassSamples::Classification { probs, .. } = &s else {
        panic!()
    };
    for row in probs.chunks(4) {
        assert_eq!(row, det.data());
    }
    assert_eq!(variation_ratio(&s).unwrap(), 0.0);
    assert_eq!(mutual_information(&s).unwrap(), 0.0);
    assert_eq!(predictive_entropy(&s).unwrap(), crate::math::entropy(det.data()));
}

#[test]
fn mc_samples_deterministic_given_seed() {
    let net = tiny_classifier(8, 0.4, 2);
    let x = tiny_input();
    assert_eq!(mc_samples(&net, &x, 16, 9).unwrap(), mc_samples(&net, &x, 16, 9).unwrap());
    assert_ne!(mc_samples(&net, &x, 16, 9).unwrap(), mc_samples(&net, &x, 16, 10).unwrap());
    assert!(mc_samples(&net, &x, 0, 9).is_err());
}

#[test]
fn exact_with_no_droppable_units_is_deterministic_softmax() {
    let net = tiny_classifier(6, 0.0, 2);
    let x = tiny_input();
    let det = net.forward(&x, crate::nn::Mode::Deterministic, 0).unwrap();
    assert_eq!(exact_predictive_distribution(&net, &x).unwrap(), det.data());
}

#[test]
fn exact_with_one_unit_is_even_mixture() {
    let net = tiny_classifier(1, 0.5, 4);
    let x = tiny_input();
    let q1 = net
        .forward_masked(x.data(), &crate::nn::Masks { keep: vec![vec![true]] })
        .unwrap();
    let q0 = net
        .forward_masked(x.data(), &crate::nn::Masks { keep: vec![vec![false]] })
        .unwrap();
    let exact = exact_predictive_distribution(&net, &x).unwrap();
    for c in 0..4 {
        assert!((exact[c] - (0.5 * q0[c] + 0.5 * q1[c])).abs() < 1e-15);
    }
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn exact_rejects_large_nets() {
    let net = tiny_classifier(21, 0.1, 4);
    assert!(matches!(
        exact_predictive(&net, &tiny_input()),
        Err(Error::TooManyDroppableUnits { units: 21, .. })
    ));
}

#[test]
fn mc_mean_converges_to_exact_enumeration() {
    for seed in [1u64, 2, 3] {
        let net = tiny_classifier(10, 0.3, seed);
        let x = tiny_input();
        let exact = exact_predictive(&net, &x).unwrap();
        let t = 100_000;
        let s = mc_samples(&net, &x, t, seed + 40).unwrap();
        let mean = mean_probs(&s).unwrap();
        let tv: f64 = 0.5 * mean.iter().zip(&exact.mean).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv <= 3.0 / (t as f64).sqrt(), "tv {tv}");
        assert!((mutual_information(&s).unwrap() - exact.mutual_information()).abs() < 0.01);
    }
}

fn random_rows(seed: u64, t: usize, c: usize, sharp: f64) -> PassSamples {
    let mut rng = stream_rng(seed, 0);
    let mut probs = Vec::with_capacity(t * c);
    for _ in 0..t {
        let logits: Vec<f64> = (0..c).map(|_| sharp * (uniform(&mut rng) - 0.5)).collect();
        probs.extend(crate::math::softmax(&logits).unwrap());
    }
    PassSamples::classification(c, probs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn information_ordering(seed in any::<u64>(), t in 1usize..12, c in 2usize..9, sharp in 0.0f64..30.0) {
        let s = random_rows(seed, t, c, sharp);
        let h = predictive_entropy(&s).unwrap();
        let mi = mutual_information(&s).unwrap();
        prop_assert!(mi >= 0.0);
        prop_assert!(mi <= h);
        prop_assert!(h <= (c as f64).ln() + 1e-12);
        let vr = variation_ratio(&s).unwrap();
        prop_assert!(vr >= 0.0 && vr <= 1.0 - 1.0 / t as f64 + 1e-15);
    }
}

proptest! {
    #[test]
    fn measures_invariant_under_pass_permutation(seed in any::<u64>(), rot in 0usize..10) {
        let s = random_rows(seed, 10, 5, 8.0);
        let PassSamples::Classification { probs, .. } = &s else { unreachable!() };
        let mut rows: Vec<&[f64]> = probs.chunks(5).collect();
        rows.rotate_left(rot);
        rows.reverse();
        let p = PassSamples::classification(5, rows.concat()).unwrap();
        prop_assert!((predictive_entropy(&s).unwrap() - predictive_entropy(&p).unwrap()).abs() < 1e-12);
        prop_assert!((mutual_information(&s).unwrap() - mutual_information(&p).unwrap()).abs() < 1e-12);
        prop_assert_eq!(variation_ratio(&s).unwrap(), variation_ratio(&p).unwrap());
    }

    #[test]
    fn variation_ratio_zero_iff_labels_agree(labels in proptest::collection::vec(0usize..4, 1..20)) {
        let s = one_hot_rows(&labels, 4);
        let agree = labels.iter().all(|&l| l == labels[0]);
        prop_assert_eq!(variation_ratio(&s).unwrap() == 0.0, agree);
    }

    #[test]
    fn variance_floor(v in proptest::collection::vec(-30.0f64..30.0, 1..64), tau in 0.001f64..10.0) {
        let s = PassSamples::regression(v.clone()).unwrap();
        let var = predictive_variance(&s, tau).unwrap();
        prop_assert!(var >= 1.0 / tau - 1e-12);
        if v.iter().all(|&x| x == v[0]) {
            prop_assert_eq!(var, 1.0 / tau);
        }
        let m = predictive_mean(&s).unwrap();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo && m <= hi);
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant(
        logits in proptest::collection::vec(-500.0f64..500.0, 1..50),
        shift in -100.0f64..100.0,
    ) {
        let p = crate::math::softmax(&logits).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        let q = crate::math::softmax(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
