//! `dropdrive` subcommands.
//!
//! Every subcommand starts from the defaults, applies `--config`, then its
//! own flags, and writes the resolved configuration next to its outputs so
//! the run can be repeated with `--config`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dropdrive_core::data::{Dataset, Policy};
use dropdrive_core::eval::{
    crash_roc_suite, metric_one, peak_analysis, report_metrics, select_threshold, MetricOneConfig, PeakRow,
};
use dropdrive_core::monitor::{run_monitored_drive, AlertRule, DriveConfig, ThresholdSet};
use dropdrive_core::nn::{HeadKind, PresetScale};
use dropdrive_core::sim::OracleMode;
use dropdrive_core::uncertainty::Measure;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{load_dataset, save_dataset};
use crate::error::{Error, IoContext, Result};
use crate::json::{ensure_parent, read_json, write_json};
use crate::model::{load_model, save_model, ModelFile};
use crate::pipeline;
use crate::report::{write_peaks, write_roc, RocSummary};
use crate::trace::{read_trace, write_trace};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "dropdrive", version, about = "Dropout uncertainty for an end-to-end steering network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record expert (or model) driving into DIR/train and DIR/test.
    Collect(CollectArgs),
    /// Train a steering network.
    Train(TrainArgs),
    /// Grid-search the regression precision.
    CalibrateTau(CalibrateArgs),
    /// Safe/unsafe ROC of each uncertainty measure on test frames.
    EvalStatic(EvalStaticArgs),
    /// Monitored closed-loop drive.
    Drive(DriveArgs),
    /// ROC of uncertainty n seconds before crashes.
    EvalCrash(EvalCrashArgs),
    /// RMSE or accuracy on test frames.
    Report(ReportArgs),
    /// Render ROC or trace CSV files as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct CollectArgs {
    #[command(flatten)]
    common: Common,
    /// Track preset or track JSON; repeat for several tracks.
    #[arg(long = "track")]
    tracks: Vec<String>,
    /// Frames recorded per track.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Do not add mirrored copies to the training side.
    #[arg(long)]
    no_mirror: bool,
    /// Drive with this model instead of the expert.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset directory; its `train` subdirectory is used when present.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_arch)]
    arch: Option<HeadKind>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<PresetScale>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    p_drop: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<PresetScale>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Precision {
    /// Regression precision; overrides the configured value.
    #[arg(long)]
    tau: Option<f64>,
    /// Output of `calibrate-tau`.
    #[arg(long, conflicts_with = "tau")]
    calibration: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalStaticArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory; its `test` subdirectory is used when present.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, value_parser = parse_oracle)]
    oracle: Option<OracleMode>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    max_fpr: Option<f64>,
    #[command(flatten)]
    precision: Precision,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DriveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    track: Option<String>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    passes: Option<usize>,
    /// MEASURE=VALUE; repeat for several measures. Replaces the configured set.
    #[arg(long = "threshold", value_parser = parse_threshold)]
    thresholds: Vec<(Measure, f64)>,
    /// any, all or a measure name.
    #[arg(long, value_parser = parse_rule)]
    rule: Option<AlertRule>,
    #[command(flatten)]
    precision: Precision,
    /// Do not print events.
    #[arg(long)]
    quiet: bool,
    /// Trace CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalCrashArgs {
    #[command(flatten)]
    common: Common,
    /// Trace CSV; repeat for several drives.
    #[arg(long = "trace", required = true)]
    traces: Vec<PathBuf>,
    /// Comma-separated seconds before the crash.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u32>,
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, value_parser = parse_measure)]
    measure: Option<Measure>,
    #[arg(long)]
    max_fpr: Option<f64>,
    /// Threshold of the peak table.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    passes: Option<usize>,
    /// Metrics JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// ROC or trace CSV; repeat to overlay ROC curves.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Measure drawn from a trace.
    #[arg(long, value_parser = parse_measure)]
    measure: Option<Measure>,
    /// Horizontal line on a trace plot.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_arch(s: &str) -> std::result::Result<HeadKind, String> {
    match s {
        "regression" => Ok(HeadKind::Regression),
        "classification" => Ok(HeadKind::Classification),
        _ => Err("expected regression or classification".into()),
    }
}

fn parse_preset(s: &str) -> std::result::Result<PresetScale, String> {
    match s {
        "fast" => Ok(PresetScale::Fast),
        "full" => Ok(PresetScale::Full),
        _ => Err("expected fast or full".into()),
    }
}

fn parse_oracle(s: &str) -> std::result::Result<OracleMode, String> {
    match s {
        "line" => Ok(OracleMode::Line),
        "arc" => Ok(OracleMode::Arc),
        _ => Err("expected line or arc".into()),
    }
}

fn parse_measure(s: &str) -> std::result::Result<Measure, String> {
    Measure::from_name(s).ok_or_else(|| "expected vr, entropy, mi or variance".into())
}

fn parse_threshold(s: &str) -> std::result::Result<(Measure, f64), String> {
    let (m, v) = s.split_once('=').ok_or("expected MEASURE=VALUE")?;
    let v: f64 = match v {
        "inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        _ => v.parse().map_err(|e| format!("{v:?}: {e}"))?,
    };
    if v.is_nan() {
        return Err("threshold is NaN".into());
    }
    Ok((parse_measure(m)?, v))
}

fn parse_rule(s: &str) -> std::result::Result<AlertRule, String> {
    match s {
        "any" => Ok(AlertRule::Any),
        "all" => Ok(AlertRule::All),
        _ => parse_measure(s).map(AlertRule::Single),
    }
}

/// Runs the command line `args` (program name first) and returns the exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dropdrive: {e}");
            1
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Collect(a) => collect(a),
        Command::Train(a) => train(a),
        Command::CalibrateTau(a) => calibrate(a),
        Command::EvalStatic(a) => eval_static(a),
        Command::Drive(a) => drive(a),
        Command::EvalCrash(a) => eval_crash(a),
        Command::Report(a) => report(a),
        Command::Plot(a) => crate::plot::plot(
            &a.inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
            &a.out,
            a.measure,
            a.threshold,
        ),
    }
}

/// `m.bin` -> `m.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// `dir/part` when it exists, else `dir`.
fn data_dir(dir: &Path, part: &str) -> PathBuf {
    let sub = dir.join(part);
    if sub.join(crate::dataset::META_FILE).exists() {
        sub
    } else {
        dir.to_path_buf()
    }
}

fn check_out_dir(dir: &Path) -> Result<()> {
    if dir.is_file() {
        return Err(Error::Usage(format!("{} is a file, expected a directory", dir.display())));
    }
    Ok(())
}

fn collect(a: CollectArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if !a.tracks.is_empty() {
        cfg.collect.tracks = a.tracks;
    }
    if let Some(f) = a.frames {
        cfg.collect.frames_per_track = f;
    }
    if let Some(f) = a.test_fraction {
        cfg.collect.test_fraction = f;
    }
    if a.no_mirror {
        cfg.collect.mirror = false;
    }
    check_out_dir(&a.out)?;
    let model = a.model.as_deref().map(load_model).transpose()?;
    if let Some(m) = &model {
        cfg.model.arch = m.net.spec().head.kind();
    }
    let policy = match &model {
        Some(m) => Policy::Model(&m.net),
        None => Policy::Expert,
    };
    let bundle = pipeline::collect_bundle(&cfg, policy)?;
    save_dataset(&bundle.train, &a.out.join("train"))?;
    save_dataset(&bundle.test, &a.out.join("test"))?;
    write_json(&a.out.join(CONFIG_FILE), &cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(v) = a.arch {
        cfg.model.arch = v;
    }
    if let Some(v) = a.preset {
        cfg.model.preset = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.p_drop {
        cfg.model.p_drop = v;
    }
    let data = load_dataset(&data_dir(&a.data, "train"))?;
    check_shape(&cfg, &data)?;
    let (net, report) = pipeline::train_model(&cfg, &data, |e, l| eprintln!("epoch {} loss {l:.6}", e + 1))?;
    save_model(&a.out, &net, Some(data.len()))?;
    let loss_path = sibling(&a.out, "loss.csv");
    let mut w = csv::Writer::from_path(&loss_path).at(&loss_path)?;
    w.write_record(["epoch", "loss"]).at(&loss_path)?;
    for (e, l) in report.epoch_loss.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()]).at(&loss_path)?;
    }
    w.flush().at(&loss_path)?;
    write_json(&sibling(&a.out, CONFIG_FILE), &cfg)
}

fn check_shape(cfg: &RunConfig, data: &Dataset) -> Result<()> {
    let want = cfg.camera().shape();
    if data.shape() != want {
        return Err(Error::Usage(format!(
            "dataset frames are {:?} but the {:?} preset expects {:?}",
            data.shape(),
            cfg.model.preset,
            want
        )));
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(v) = a.preset {
        cfg.model.preset = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.passes {
        cfg.passes = v;
    }
    let data = load_dataset(&data_dir(&a.data, "train"))?;
    check_shape(&cfg, &data)?;
    let cal = pipeline::calibrate(&cfg, &data)?;
    write_json(&a.out, &cal)?;
    write_json(&sibling(&a.out, CONFIG_FILE), &cfg)
}

/// Loads the model and settles the precision, recording it in `cfg`.
fn model_and_tau(cfg: &mut RunConfig, model: &Path, p: &Precision) -> Result<ModelFile> {
    let mf = load_model(model)?;
    cfg.model.arch = mf.net.spec().head.kind();
    if let Some(t) = p.tau {
        cfg.tau.value = Some(t);
    } else if let Some(path) = &p.calibration {
        let cal: dropdrive_core::uncertainty::Calibration = read_json(path)?;
        cfg.tau.value = Some(cal.best.tau);
    }
    if cfg.tau.value.is_none() {
        cfg.tau.value = Some(match (cfg.model.arch, mf.n_train) {
            (HeadKind::Classification, _) => 1.0,
            (HeadKind::Regression, Some(n)) => pipeline::default_precision(cfg, &mf.net, n)?.tau,
            (HeadKind::Regression, None) => {
                return Err(Error::Usage(format!(
                    "{} does not record its training-set size; pass --tau or --calibration",
                    model.display()
                )))
            }
        });
    }
    match cfg.tau.value {
        Some(t) if t > 0.0 && t.is_finite() => Ok(mf),
        t => Err(Error::Usage(format!("precision must be positive and finite, got {t:?}"))),
    }
}

fn tau(cfg: &RunConfig) -> f64 {
    cfg.tau.value.expect("precision resolved")
}

#[derive(Serialize)]
struct StaticSummary {
    oracle: OracleMode,
    sample_n: usize,
    passes: usize,
    tau: f64,
    unsafe_frames: usize,
    safe_frames: usize,
    measures: BTreeMap<Measure, RocSummary>,
}

fn eval_static(a: EvalStaticArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(v) = a.sample {
        cfg.static_eval.sample_n = v;
    }
    if let Some(v) = a.oracle {
        cfg.static_eval.oracle = v;
    }
    if let Some(v) = a.passes {
        cfg.passes = v;
    }
    if let Some(v) = a.max_fpr {
        cfg.static_eval.max_fpr = v;
    }
    check_out_dir(&a.out)?;
    let mf = model_and_tau(&mut cfg, &a.model, &a.precision)?;
    let test = load_dataset(&data_dir(&a.data, "test"))?;
    let m1 = metric_one(
        &mf.net,
        &test,
        &MetricOneConfig {
            sample_n: cfg.static_eval.sample_n,
            mode: cfg.static_eval.oracle,
            passes: cfg.passes,
            tau: tau(&cfg),
            seed: cfg.seed,
        },
    )?;
    let mut measures = BTreeMap::new();
    for (m, curve) in &m1.curves {
        let choice = select_threshold(curve, cfg.static_eval.max_fpr)?;
        write_roc(&a.out.join(format!("roc_{}.csv", m.name())), curve, &choice)?;
        measures.insert(*m, RocSummary::new(curve, &choice));
    }
    let unsafe_frames = m1.frames.iter().filter(|f| f.is_unsafe).count();
    let summary = StaticSummary {
        oracle: cfg.static_eval.oracle,
        sample_n: m1.frames.len(),
        passes: cfg.passes,
        tau: tau(&cfg),
        unsafe_frames,
        safe_frames: m1.frames.len() - unsafe_frames,
        measures,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    write_json(&a.out.join(CONFIG_FILE), &cfg)
}

fn drive(a: DriveArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(v) = a.track {
        cfg.drive.track = v;
    }
    if let Some(v) = a.duration {
        cfg.drive.duration_s = v;
    }
    if let Some(v) = a.passes {
        cfg.passes = v;
    }
    if !a.thresholds.is_empty() {
        let map: BTreeMap<Measure, f64> = a.thresholds.into_iter().collect();
        let rule = match (a.rule, map.len()) {
            (Some(r), _) => r,
            (None, 1) => AlertRule::Single(*map.keys().next().expect("one entry")),
            (None, _) => AlertRule::Any,
        };
        cfg.drive.thresholds = ThresholdSet::new(map, rule)?;
    } else if let Some(r) = a.rule {
        cfg.drive.thresholds = ThresholdSet::new(cfg.drive.thresholds.thresholds.clone(), r)?;
    }
    let mf = model_and_tau(&mut cfg, &a.model, &a.precision)?;
    let track = pipeline::resolve_track(&cfg.drive.track)?;
    let model_bytes = fs::read(&a.model).at(&a.model)?;
    let dc = DriveConfig {
        duration_s: cfg.drive.duration_s,
        passes: cfg.passes,
        seed: cfg.seed,
        tau: tau(&cfg),
        sim: cfg.sim,
        camera: cfg.camera(),
        thresholds: cfg.drive.thresholds.clone(),
        model_id: crate::model::model_id(&model_bytes),
    };
    let started = Instant::now();
    let mut clock = || Some(started.elapsed().as_secs_f64());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut failed: Option<std::io::Error> = None;
    let mut sink = |ev: &dropdrive_core::monitor::MonitorEvent| {
        if a.quiet || failed.is_some() {
            return;
        }
        let line = serde_json::to_string(ev).expect("events serialize");
        if let Err(e) = writeln!(out, "{line}") {
            failed = Some(e);
        }
    };
    let trace = run_monitored_drive(&mf.net, &track, &dc, &mut clock, &mut sink)?;
    if let Some(e) = failed {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            return Err(Error::Io { path: PathBuf::from("<stdout>"), source: e });
        }
    }
    write_trace(&a.out, &trace)?;
    write_json(&sibling(&a.out, CONFIG_FILE), &cfg)
}

#[derive(Serialize)]
struct CrashSummaryEntry {
    n_seconds: u32,
    crashes: usize,
    roc: RocSummary,
}

#[derive(Serialize)]
struct CrashSummary {
    measure: Measure,
    window_s: f64,
    traces: usize,
    crashes: usize,
    best_n_seconds: Option<u32>,
    best_auc: Option<f64>,
    peak_threshold: f64,
    entries: Vec<CrashSummaryEntry>,
}

fn eval_crash(a: EvalCrashArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if !a.n.is_empty() {
        cfg.crash.n_list = a.n;
    }
    if let Some(v) = a.window {
        cfg.crash.window_s = v;
    }
    if let Some(v) = a.measure {
        cfg.crash.measure = v;
    }
    if let Some(v) = a.max_fpr {
        cfg.crash.max_fpr = v;
    }
    if let Some(v) = a.threshold {
        cfg.crash.peak_threshold = Some(v);
    }
    check_out_dir(&a.out)?;
    let traces = a.traces.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>>>()?;
    let m = cfg.crash.measure;
    let suite = crash_roc_suite(&traces, &cfg.crash.n_list, cfg.crash.window_s, &[m], cfg.seed)?;
    let mut entries = Vec::new();
    for e in &suite.entries {
        let choice = select_threshold(&e.curve, cfg.crash.max_fpr)?;
        write_roc(&a.out.join(format!("roc_n{}_{}.csv", e.n_seconds, m.name())), &e.curve, &choice)?;
        let crashes = suite.crashes_used.iter().find(|c| c.0 == e.n_seconds).map_or(0, |c| c.1);
        entries.push(CrashSummaryEntry {
            n_seconds: e.n_seconds,
            crashes,
            roc: RocSummary::new(&e.curve, &choice),
        });
    }
    let best = suite.best_for(m);
    let peak_threshold = match (cfg.crash.peak_threshold, &best) {
        (Some(t), _) => t,
        (None, Some(b)) => entries
            .iter()
            .find(|e| e.n_seconds == b.n_seconds)
            .map(|e| e.roc.chosen_threshold)
            .expect("best n has an entry"),
        (None, None) => return Err(Error::Usage("no crash windows to choose a threshold from".into())),
    };
    cfg.crash.peak_threshold = Some(peak_threshold);
    let mut rows: Vec<PeakRow> = Vec::new();
    for t in &traces {
        for mut r in peak_analysis(t, m, peak_threshold)? {
            r.crash_id = rows.len();
            rows.push(r);
        }
    }
    write_peaks(&a.out.join("table1.csv"), &rows)?;
    let summary = CrashSummary {
        measure: m,
        window_s: cfg.crash.window_s,
        traces: traces.len(),
        crashes: traces.iter().map(|t| t.crash_count()).sum(),
        best_n_seconds: best.as_ref().map(|b| b.n_seconds),
        best_auc: best.as_ref().map(|b| b.auc),
        peak_threshold,
        entries,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    write_json(&a.out.join(CONFIG_FILE), &cfg)
}

fn report(a: ReportArgs) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(v) = a.passes {
        cfg.passes = v;
    }
    let mf = load_model(&a.model)?;
    cfg.model.arch = mf.net.spec().head.kind();
    let test = load_dataset(&data_dir(&a.data, "test"))?;
    let metrics = report_metrics(&mf.net, &test, cfg.passes, cfg.seed)?;
    ensure_parent(&a.out)?;
    write_json(&a.out, &metrics)?;
    write_json(&sibling(&a.out, CONFIG_FILE), &cfg)
}
