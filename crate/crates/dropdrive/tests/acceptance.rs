//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Criteria 6 to 9 share one collection and two trained networks built
//! with the default run configuration; this takes a while on one core.

use std::f64::consts::LN_2;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dropdrive::config::RunConfig;
use dropdrive::dataset::{load_dataset, save_dataset};
use dropdrive::model::{encode_model, load_model, round_to_f32, save_model};
use dropdrive::pipeline::{self, Bundle};
use dropdrive_core::data::{collect_run, CollectConfig, Policy};
use dropdrive_core::eval::{
    crash_roc_suite, extract_crash_windows, mann_whitney, metric_one, rates_at, roc_curve, select_threshold,
    MetricOneConfig, ScoredSample,
};
use dropdrive_core::monitor::{run_monitored_drive, DriveConfig, DriveTrace, Measures, ThresholdSet, TraceMeta, TraceRow};
use dropdrive_core::nn::{
    build_preset, Gradients, Head, HeadKind, LayerSpec, LossKind, Masks, Network, NetworkSpec, PresetScale,
};
use dropdrive_core::rng::{derive, stream_rng, uniform};
use dropdrive_core::sim::{detect_crash, expert_steering, respawn, step, Track};
use dropdrive_core::uncertainty::{
    exact_predictive, mc_samples, mean_probs, mutual_information, predictive_entropy, predictive_variance,
    variation_ratio, Measure, PassSamples,
};
use dropdrive_core::Tensor;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.2} s of {limit_s} s"))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn rows(classes: usize, rows: &[Vec<f64>]) -> PassSamples {
    PassSamples::classification(classes, rows.concat()).unwrap()
}

fn analytic_suite() -> Verdict {
    let start = Instant::now();
    let uniform200 = rows(200, &vec![vec![1.0 / 200.0; 200]; 4]);
    let h = predictive_entropy(&uniform200).unwrap();

    let a = vec![1.0, 0.0];
    let b = vec![0.0, 1.0];
    let two = rows(2, &[a.clone(), b.clone(), a, b]);
    let mi = mutual_information(&two).unwrap();

    let labels: Vec<Vec<f64>> = (0..128)
        .map(|t| {
            let mut r = vec![0.0; 4];
            r[if t < 96 { 0 } else { 1 + t % 3 }] = 1.0;
            r
        })
        .collect();
    let vr = variation_ratio(&rows(4, &labels)).unwrap();

    let tau = 0.00328;
    let constant = PassSamples::regression(vec![0.37; 64]).unwrap();
    let var = predictive_variance(&constant, tau).unwrap();

    let (time_ok, time) = within(start.elapsed(), 1.0);
    let ok = close(h, 200f64.ln(), 1e-9)
        && close(mi, LN_2, 1e-9)
        && close(vr, 0.25, 1e-9)
        && close(var, 1.0 / tau, 1e-9)
        && time_ok;
    verdict(
        ok,
        format!("entropy {h:.9} (ln 200), MI {mi:.9} (ln 2), VR {vr}, variance {var:.6} (1/tau {:.6}); {time}", 1.0 / tau),
    )
}

fn tiny_classifier(hidden: usize, p: f64, seed: u64) -> Network {
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

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let t = 10_000;
    let (mut worst_tv, mut worst_err) = (0.0f64, 0.0f64);
    for seed in 0..5u64 {
        let net = tiny_classifier(12, 0.3, seed);
        let x = Tensor::new(vec![1, 1, 3], vec![1.5, -2.0 + seed as f64 * 0.3, 0.8]).unwrap();
        let exact = exact_predictive(&net, &x).unwrap();
        let s = mc_samples(&net, &x, t, derive(7, seed)).unwrap();
        let mean = mean_probs(&s).unwrap();
        let tv = 0.5 * mean.iter().zip(&exact.mean).map(|(a, b)| (a - b).abs()).sum::<f64>();
        worst_tv = worst_tv.max(tv);
        for (mc, ex) in [
            (mutual_information(&s).unwrap(), exact.mutual_information()),
            (predictive_entropy(&s).unwrap(), exact.entropy()),
            (variation_ratio(&s).unwrap(), exact.variation_ratio()),
        ] {
            worst_err = worst_err.max((mc - ex).abs());
        }
    }
    let (time_ok, time) = within(start.elapsed(), 120.0);
    verdict(
        worst_tv <= 0.02 && worst_err <= 0.05 && time_ok,
        format!("12 droppable units, T = {t}: max TV {worst_tv:.4}, max measure error {worst_err:.4}; {time}"),
    )
}

fn gradient_check() -> Verdict {
    let start = Instant::now();
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    for (head, loss, target) in [
        (Head::Regression, LossKind::MeanSquaredError, vec![0.3]),
        (
            Head::Classification { classes: 5 },
            LossKind::CategoricalCrossEntropy,
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
        ),
    ] {
        let mut layers = vec![
            LayerSpec::Conv {
                filters: 3,
                kernel: [3, 3],
                stride: [1, 1],
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { p_drop: 0.3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 6 },
            LayerSpec::Relu,
        ];
        layers.push(LayerSpec::Dense { units: head.outputs() });
        if loss == LossKind::CategoricalCrossEntropy {
            layers.push(LayerSpec::Softmax);
        }
        let spec = NetworkSpec {
            input_shape: [5, 6, 2],
            layers,
            head,
            l2_lambda: 0.0,
        };
        let net = Network::new(spec, 3).unwrap();
        let mut rng = stream_rng(11, 0);
        let input: Vec<f64> = (0..60).map(|_| 2.0 * uniform(&mut rng) - 1.0).collect();
        let masks = Masks {
            keep: net
                .dropout_units()
                .iter()
                .map(|&(_, n, p)| (0..n).map(|_| uniform(&mut rng) >= p).collect())
                .collect(),
        };
        let loss_of = |n: &Network| {
            let mut g = Gradients::zeros_like(n);
            n.accumulate_gradient(&input, &target, loss, Some(&masks), None, &mut g).unwrap()
        };
        let mut g = Gradients::zeros_like(&net);
        net.accumulate_gradient(&input, &target, loss, Some(&masks), None, &mut g).unwrap();
        let analytic = g.flatten();
        let mut k = 0;
        for li in 0..net.params().len() {
            let Some(p) = &net.params()[li] else { continue };
            for (which, len) in [(0, p.kernel.len()), (1, p.bias.len())] {
                for j in 0..len {
                    let shifted = |d: f64| {
                        let mut params = net.params().to_vec();
                        let lp = params[li].as_mut().unwrap();
                        let t = if which == 0 { &mut lp.kernel } else { &mut lp.bias };
                        t.data_mut()[j] += d;
                        Network::from_params(net.spec().clone(), params).unwrap()
                    };
                    let numeric = (loss_of(&shifted(H)) - loss_of(&shifted(-H))) / (2.0 * H);
                    let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                    k += 1;
                }
            }
        }
    }
    let (time_ok, time) = within(start.elapsed(), 60.0);
    verdict(worst <= 1e-4 && time_ok, format!("max relative error {worst:.2e}; {time}"))
}

fn dropout_off_collapse() -> Verdict {
    let start = Instant::now();
    let tau = 0.00328;
    let class = Network::new(build_preset(HeadKind::Classification, PresetScale::Fast).with_p_drop(0.0), 1).unwrap();
    let reg = Network::new(build_preset(HeadKind::Regression, PresetScale::Fast).with_p_drop(0.0), 2).unwrap();
    let shape = class.spec().input_shape;
    let len = shape.iter().product();
    let mut bad = 0;
    for i in 0..100u64 {
        let mut rng = stream_rng(i, 3);
        let x = Tensor::new(shape.to_vec(), (0..len).map(|_| uniform(&mut rng)).collect()).unwrap();
        let c = mc_samples(&class, &x, 128, i).unwrap();
        let r = mc_samples(&reg, &x, 128, i).unwrap();
        let ok = variation_ratio(&c).unwrap() == 0.0
            && mutual_information(&c).unwrap() == 0.0
            && predictive_variance(&r, tau).unwrap() == 1.0 / tau;
        bad += usize::from(!ok);
    }
    let (time_ok, time) = within(start.elapsed(), 10.0);
    verdict(bad == 0 && time_ok, format!("{bad} of 100 inputs off; {time}"))
}

fn roc_correctness() -> Verdict {
    let mut rng = stream_rng(5, 0);
    let samples: Vec<ScoredSample> = (0..200)
        .map(|_| ScoredSample {
            score: (uniform(&mut rng) * 40.0).floor() / 4.0,
            positive: uniform(&mut rng) < 0.4,
        })
        .collect();
    let curve = roc_curve(&samples).unwrap();
    let sweep_ok = curve.points.iter().all(|p| rates_at(&samples, p.threshold).unwrap() == (p.tpr, p.fpr));
    let mw_err = (curve.auc - mann_whitney(&samples).unwrap()).abs();
    let random: Vec<ScoredSample> = (0..10_000)
        .map(|_| ScoredSample {
            score: uniform(&mut rng),
            positive: uniform(&mut rng) < 0.5,
        })
        .collect();
    let chance = roc_curve(&random).unwrap().auc;
    verdict(
        sweep_ok && mw_err <= 1e-12 && (chance - 0.5).abs() <= 0.02,
        format!("sweep equals brute force: {sweep_ok}; |AUC - Mann-Whitney| {mw_err:.1e}; random AUC {chance:.4}"),
    )
}

/// Shared trained state for the desk-scale criteria.
struct Trained {
    cfg: RunConfig,
    bundle: Bundle,
    classifier: Network,
    regressor: Network,
    setup: Duration,
}

fn train_shared() -> Trained {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let bundle = pipeline::collect_bundle(&cfg, Policy::Expert).unwrap();
    eprintln!("collected {} train / {} test frames in {:.0?}", bundle.train.len(), bundle.test.len(), start.elapsed());
    let (net, _) = pipeline::train_model(&cfg, &bundle.train, |e, l| {
        eprintln!("classification epoch {} loss {l:.4} ({:.0?})", e + 1, start.elapsed())
    })
    .unwrap();
    let classifier = round_to_f32(&net).unwrap();
    let setup = start.elapsed();
    let mut rcfg = cfg.clone();
    rcfg.model.arch = HeadKind::Regression;
    let (net, _) = pipeline::train_model(&rcfg, &bundle.train, |e, l| {
        eprintln!("regression epoch {} loss {l:.5} ({:.0?})", e + 1, start.elapsed())
    })
    .unwrap();
    Trained {
        cfg,
        bundle,
        classifier,
        regressor: round_to_f32(&net).unwrap(),
        setup,
    }
}

fn drive(net: &Network, track: &Track, duration_s: f64, seed: u64, cfg: &RunConfig) -> DriveTrace {
    let mut dc = DriveConfig::new(duration_s, cfg.drive.thresholds.clone(), 1.0, seed);
    dc.passes = cfg.passes;
    dc.sim = cfg.sim;
    dc.camera = cfg.camera();
    let start = Instant::now();
    run_monitored_drive(net, track, &dc, &mut || Some(start.elapsed().as_secs_f64()), &mut |_| {}).unwrap()
}

fn expert_loop_crashes(track: &Track, frames: usize, cfg: &RunConfig) -> usize {
    let mut s = track.start_state(cfg.sim.speed);
    let mut crashes = 0;
    for _ in 0..frames {
        if detect_crash(track, &s) {
            crashes += 1;
            s = respawn(track, &s, cfg.sim.respawn_ahead_m);
        }
        s = step(&s, expert_steering(track, &s).unwrap(), cfg.sim.dt).unwrap();
    }
    crashes
}

fn desk_driving(t: &Trained, fps: &mut Vec<f64>) -> Verdict {
    let start = Instant::now();
    let track = pipeline::resolve_track("oval").unwrap();
    let duration = (track.length() / t.cfg.sim.speed).ceil() + 1.0;
    let trace = drive(&t.classifier, &track, duration, 1, &t.cfg);
    fps.extend(trace.meta.fps);
    let expert = expert_loop_crashes(&track, trace.rows.len(), &t.cfg);
    let minutes = (t.setup + start.elapsed()).as_secs_f64() / 60.0;
    let n_train = t.bundle.train.len();
    verdict(
        trace.crash_count() <= 2 && expert == 0 && n_train >= 12_000 && minutes <= 30.0,
        format!(
            "{} frames after mirroring, {} epochs; one oval loop ({duration} s): network {} crashes, expert {expert}; {minutes:.1} min",
            n_train,
            t.cfg.train.epochs,
            trace.crash_count()
        ),
    )
}

fn metric_one_analogue(t: &Trained) -> Verdict {
    let mc = MetricOneConfig {
        sample_n: t.cfg.static_eval.sample_n,
        mode: t.cfg.static_eval.oracle,
        passes: t.cfg.passes,
        tau: 1.0,
        seed: t.cfg.seed,
    };
    let c = metric_one(&t.classifier, &t.bundle.test, &mc).unwrap();
    let auc = |m| c.curve(m).unwrap().auc;
    let (mi, h, vr) = (
        auc(Measure::MutualInformation),
        auc(Measure::Entropy),
        auc(Measure::VariationRatio),
    );
    let n_train = t.bundle.train.len();
    let tau = pipeline::default_precision(&t.cfg, &t.regressor, n_train).unwrap().tau;
    let r = metric_one(&t.regressor, &t.bundle.test, &MetricOneConfig { tau, ..mc }).unwrap();
    let var = r.curve(Measure::Variance).unwrap().auc;
    let unsafe_c = c.frames.iter().filter(|f| f.is_unsafe).count();
    let unsafe_r = r.frames.iter().filter(|f| f.is_unsafe).count();
    verdict(
        mi >= 0.65 && h > 0.55 && vr > 0.55 && var > 0.5,
        format!(
            "{} oracle, {} frames; classification ({unsafe_c} unsafe): MI {mi:.3} (reference 0.77), entropy {h:.3}, VR {vr:.3}; regression ({unsafe_r} unsafe): variance {var:.3} (reference 0.64)",
            t.cfg.static_eval.oracle.name(),
            c.frames.len()
        ),
    )
}

/// MI spikes over the frames within 0.25 s of `n` seconds before each crash.
fn synthetic_spike(n: u32) -> DriveTrace {
    let dt = 1.0 / 6.0;
    let crashes = [120u64, 300, 480];
    let rows = (0..600u64)
        .map(|f| {
            let spike = crashes.iter().any(|&c| (c as i64 - 6 * n as i64 - f as i64).abs() <= 1);
            TraceRow {
                frame: f,
                t: f as f64 * dt,
                angle_deg: 0.0,
                measures: Measures {
                    mi: Some(if spike { 1.0 } else { 0.1 }),
                    ..Measures::default()
                },
                crashed: crashes.contains(&f),
                alert: false,
            }
        })
        .collect();
    DriveTrace {
        meta: TraceMeta {
            model_id: "synthetic".into(),
            track: "oval".into(),
            passes: 128,
            tau: 1.0,
            thresholds: ThresholdSet::single(Measure::MutualInformation, 0.5).unwrap(),
            seed: 0,
            dt,
            speed: 6.7,
            fps: None,
        },
        rows,
    }
}

fn metric_two_analogue(t: &Trained, fps: &mut Vec<f64>) -> Verdict {
    let synthetic_ok = (1..=6u32).all(|n| {
        let suite = crash_roc_suite(&[synthetic_spike(n)], &[n], 0.25, &[Measure::MutualInformation], 1).unwrap();
        let e = &suite.entries[0];
        e.curve.auc == 1.0
            && extract_crash_windows(&synthetic_spike(n), n, 0.25, 1).unwrap().crashes.len() == 3
    });

    let track = pipeline::resolve_track("serpentine").unwrap();
    let mut traces = Vec::new();
    let mut crashes = 0;
    for k in 0..8u64 {
        let trace = drive(&t.classifier, &track, 300.0, derive(t.cfg.seed, 100 + k), &t.cfg);
        fps.extend(trace.meta.fps);
        crashes += trace.crash_count();
        traces.push(trace);
        if crashes >= 10 {
            break;
        }
    }
    let m = Measure::MutualInformation;
    let suite = crash_roc_suite(&traces, &t.cfg.crash.n_list, t.cfg.crash.window_s, &[m], t.cfg.seed).unwrap();
    let aucs: Vec<String> = suite.entries.iter().map(|e| format!("n={} {:.3}", e.n_seconds, e.curve.auc)).collect();
    let best = suite.best_for(m);
    let chosen = best
        .as_ref()
        .and_then(|b| suite.entry(b.n_seconds, m))
        .map(|e| select_threshold(&e.curve, t.cfg.crash.max_fpr).unwrap());
    let best_auc = best.as_ref().map_or(0.0, |b| b.auc);
    verdict(
        synthetic_ok && crashes >= 10 && best_auc >= 0.6,
        format!(
            "synthetic spikes recovered: {synthetic_ok}; {crashes} crashes over {} s of serpentine driving; MI AUC {}; best {} (reference n=3, tpr 0.73 / fpr 0.28){}",
            traces.len() * 300,
            aucs.join(", "),
            best.as_ref().map_or("none".into(), |b| format!("n={} AUC {:.3}", b.n_seconds, b.auc)),
            chosen.map_or(String::new(), |c| format!(", threshold {:.4} tpr {:.2} fpr {:.2}", c.threshold, c.tpr, c.fpr))
        ),
    )
}

fn throughput(fps: &[f64]) -> Verdict {
    let min = fps.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = fps.iter().sum::<f64>() / fps.len().max(1) as f64;
    verdict(
        !fps.is_empty() && min >= 6.0,
        format!("fast preset, T = 128, single thread: {} drives, min {min:.1} fps, mean {mean:.1} fps (reference 6)", fps.len()),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let track = pipeline::resolve_track("figure8").unwrap();
    let cc = CollectConfig::default();
    let a = collect_run(&track, Policy::Expert, 120, 9, &cc).unwrap();
    let b = collect_run(&track, Policy::Expert, 120, 9, &cc).unwrap();
    save_dataset(&a, dir.path()).unwrap();
    let data_ok = a == b && load_dataset(dir.path()).unwrap() == a;

    let mut cfg = RunConfig::default();
    cfg.train.epochs = 1;
    cfg.seed = 4;
    let (m1, _) = pipeline::train_model(&cfg, &a, |_, _| {}).unwrap();
    let (m2, _) = pipeline::train_model(&cfg, &a, |_, _| {}).unwrap();
    let path = dir.path().join("m.bin");
    save_model(&path, &m1, Some(a.len())).unwrap();
    let back = load_model(&path).unwrap();
    let model_ok = encode_model(&m1, None) == encode_model(&m2, None)
        && back.net == round_to_f32(&m1).unwrap()
        && encode_model(&back.net, Some(a.len())) == std::fs::read(&path).unwrap();

    let strip = |mut t: DriveTrace| {
        t.meta.fps = None;
        t
    };
    let t1 = strip(drive(&back.net, &track, 5.0, 3, &cfg));
    let t2 = strip(drive(&back.net, &track, 5.0, 3, &cfg));
    let tpath = dir.path().join("t.csv");
    dropdrive::trace::write_trace(&tpath, &t1).unwrap();
    let trace_ok = t1 == t2 && dropdrive::trace::read_trace(&tpath).unwrap() == t1;
    verdict(
        data_ok && model_ok && trace_ok,
        format!("datasets {data_ok}, models at 32 bits {model_ok}, traces {trace_ok}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |id, name, v: Verdict| {
        println!("criterion {id:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };
    record(1, "analytic uncertainty suite", analytic_suite());
    record(2, "MC vs exact mask enumeration", oracle_equivalence());
    record(3, "gradient check", gradient_check());
    record(4, "dropout-off collapse", dropout_off_collapse());
    record(5, "ROC correctness", roc_correctness());
    let trained = train_shared();
    let mut fps = Vec::new();
    record(6, "desk-scale driving", desk_driving(&trained, &mut fps));
    record(7, "static safe/unsafe ROC", metric_one_analogue(&trained));
    record(8, "crash-anticipation ROC", metric_two_analogue(&trained, &mut fps));
    record(9, "throughput", throughput(&fps));
    record(10, "determinism and round trips", determinism());
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
