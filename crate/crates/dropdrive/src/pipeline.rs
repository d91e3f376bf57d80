//! Experiment stages shared by the command line and the test suites.

use std::path::Path;

use dropdrive_core::data::{augment_mirror, collect_run, concat, split, CollectConfig, Dataset, Policy};
use dropdrive_core::nn::{build_preset, train_with_progress, HeadKind, LossKind, Network, NetworkSpec, TrainConfig, TrainReport};
use dropdrive_core::rng::derive;
use dropdrive_core::sim::{Track, TrackPreset};
use dropdrive_core::uncertainty::{calibrate_tau, Calibration, PrecisionParams, TauGrid};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::json::read_json;

/// A bundled preset name or a track JSON file.
pub fn resolve_track(name: &str) -> Result<Track> {
    match TrackPreset::from_name(name) {
        Some(p) => Ok(p.build()),
        None if Path::new(name).exists() => read_json(Path::new(name)),
        None => Err(Error::Usage(format!(
            "unknown track {name:?}: use oval, figure8, serpentine or a track JSON file"
        ))),
    }
}

pub fn collect_config(cfg: &RunConfig) -> CollectConfig {
    CollectConfig {
        sim: cfg.sim,
        camera: cfg.camera(),
        disturbance: cfg.collect.disturbance,
        crash_budget: cfg.collect.crash_budget,
    }
}

/// Train and test sides of a collection.
pub struct Bundle {
    pub train: Dataset,
    pub test: Dataset,
}

/// Collects `frames_per_track` frames on each track, splits each run, pools
/// the sides and mirrors the training side.
pub fn collect_bundle(cfg: &RunConfig, policy: Policy<'_>) -> Result<Bundle> {
    if cfg.collect.tracks.is_empty() {
        return Err(Error::Usage("no tracks to collect on".into()));
    }
    let cc = collect_config(cfg);
    let (mut trains, mut tests) = (Vec::new(), Vec::new());
    for (k, name) in cfg.collect.tracks.iter().enumerate() {
        let track = resolve_track(name)?;
        let run = collect_run(&track, policy, cfg.collect.frames_per_track, derive(cfg.seed, k as u64), &cc)?;
        let (train, test) = split(run, cfg.collect.test_fraction, derive(cfg.seed, 1000 + k as u64))?;
        trains.push(train);
        tests.push(test);
    }
    let source = format!("collect:{}", cfg.collect.tracks.join("+"));
    let mut train = concat(trains, cfg.seed, source.clone())?;
    if cfg.collect.mirror {
        train = augment_mirror(train)?;
    }
    let test = concat(tests, cfg.seed, source)?;
    Ok(Bundle { train, test })
}

pub fn network_spec(cfg: &RunConfig) -> NetworkSpec {
    let mut spec = build_preset(cfg.model.arch, cfg.model.preset).with_p_drop(cfg.model.p_drop);
    spec.l2_lambda = cfg.model.l2_lambda;
    spec
}

pub fn train_config(cfg: &RunConfig, arch: HeadKind) -> TrainConfig {
    TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        seed: cfg.seed,
        loss: match arch {
            HeadKind::Regression => LossKind::MeanSquaredError,
            HeadKind::Classification => LossKind::CategoricalCrossEntropy,
        },
    }
}

/// Trains a fresh network of the configured architecture on `data`.
pub fn train_model(
    cfg: &RunConfig,
    data: &Dataset,
    on_epoch: impl FnMut(usize, f64),
) -> Result<(Network, TrainReport)> {
    let spec = network_spec(cfg);
    let net = Network::new(spec, derive(cfg.seed, 1))?;
    let labeled = data.labeled(cfg.model.arch)?;
    Ok(train_with_progress(&net, &labeled, &train_config(cfg, cfg.model.arch), on_epoch)?)
}

/// Precision from the configured length scale and the model's L2 multiplier.
pub fn default_precision(cfg: &RunConfig, net: &Network, n_train: usize) -> Result<PrecisionParams> {
    let spec = net.spec();
    let p_drop = net.dropout_units().iter().map(|u| u.2).fold(0.0, f64::max);
    let lambda = if spec.l2_lambda > 0.0 { spec.l2_lambda } else { cfg.model.l2_lambda };
    Ok(PrecisionParams::new(cfg.tau.length_scale, 1.0 - p_drop, n_train, lambda)?)
}

/// Grid search for the regression precision on a validation slice of `data`.
pub fn calibrate(cfg: &RunConfig, data: &Dataset) -> Result<Calibration> {
    let (fit, validation) = split(data.clone(), cfg.tau.validation_fraction, derive(cfg.seed, 2))?;
    let mut rc = cfg.clone();
    rc.model.arch = HeadKind::Regression;
    let spec = network_spec(&rc);
    let grid = TauGrid {
        length_scales: cfg.tau.grid_length_scales.clone(),
        lambdas: cfg.tau.grid_lambdas.clone(),
    };
    let fit_l = fit.labeled(HeadKind::Regression)?;
    let val_l = validation.labeled(HeadKind::Regression)?;
    Ok(calibrate_tau(
        &spec,
        &fit_l,
        &val_l,
        &train_config(&rc, HeadKind::Regression),
        &grid,
        1.0 - cfg.model.p_drop,
        cfg.passes,
        cfg.seed,
    )?)
}
