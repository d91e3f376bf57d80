//! Closed-loop monitored driving.
//!
//! Every frame is rendered, passed through the network `T` times with
//! dropout active, steered by the predictive mean (regression) or the modal
//! class (classification), scored with the uncertainty measures and checked
//! against alert thresholds. Crashes respawn the car and are logged.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::nn::Network;
use crate::rng::derive;
use crate::sim::{detect_crash, render_camera, respawn, step, Camera, SimConfig, Track};
use crate::uncertainty::{mc_samples, summarize, Measure, UncertaintyReport, DEFAULT_PASSES};
use crate::{Error, Result};

/// How per-measure threshold checks combine into one alert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertRule {
    /// Any thresholded measure at or above its threshold.
    Any,
    /// Every thresholded measure at or above its threshold.
    All,
    /// Only the named measure counts.
    Single(Measure),
}

/// Alert thresholds, one per measure. A value at or above its threshold fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSet {
    #[serde(with = "crate::serde_ext::map")]
    pub thresholds: BTreeMap<Measure, f64>,
    pub rule: AlertRule,
}

impl ThresholdSet {
    pub fn new(thresholds: BTreeMap<Measure, f64>, rule: AlertRule) -> Result<Self> {
        let t = Self { thresholds, rule };
        t.validate()?;
        Ok(t)
    }

    /// Single-measure rule on `m`.
    pub fn single(m: Measure, threshold: f64) -> Result<Self> {
        Self::new(BTreeMap::from([(m, threshold)]), AlertRule::Single(m))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((m, _)) = self.thresholds.iter().find(|(_, v)| v.is_nan()) {
            return Err(Error::InvalidArgument(alloc::format!("threshold for {} is NaN", m.name())));
        }
        if let AlertRule::Single(m) = self.rule {
            if !self.thresholds.contains_key(&m) {
                return Err(Error::InvalidArgument(alloc::format!("no threshold for {}", m.name())));
            }
        }
        Ok(())
    }

    /// Alert decision for one frame's measures. Measures the frame lacks never fire.
    pub fn fires(&self, values: &Measures) -> bool {
        let hit = |m: &Measure, thr: &f64| values.get(*m).is_some_and(|v| v >= *thr);
        match self.rule {
            AlertRule::Single(m) => self.thresholds.get(&m).is_some_and(|t| hit(&m, t)),
            AlertRule::Any => self.thresholds.iter().any(|(m, t)| hit(m, t)),
            AlertRule::All => !self.thresholds.is_empty() && self.thresholds.iter().all(|(m, t)| hit(m, t)),
        }
    }
}

/// Per-frame measure values; absent for the other head kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub vr: Option<f64>,
    pub entropy: Option<f64>,
    pub mi: Option<f64>,
    pub variance: Option<f64>,
}

impl Measures {
    pub fn get(&self, m: Measure) -> Option<f64> {
        match m {
            Measure::VariationRatio => self.vr,
            Measure::Entropy => self.entropy,
            Measure::MutualInformation => self.mi,
            Measure::Variance => self.variance,
        }
    }

    pub fn from_report(r: &UncertaintyReport) -> Self {
        Self {
            vr: r.measure(Measure::VariationRatio),
            entropy: r.measure(Measure::Entropy),
            mi: r.measure(Measure::MutualInformation),
            variance: r.measure(Measure::Variance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub frame: u64,
    pub t: f64,
    /// Steering applied at this frame, degrees.
    pub angle_deg: f64,
    pub measures: Measures,
    /// A crash was detected at the start of this frame.
    pub crashed: bool,
    pub alert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub model_id: String,
    pub track: String,
    pub passes: usize,
    pub tau: f64,
    pub thresholds: ThresholdSet,
    pub seed: u64,
    pub dt: f64,
    pub speed: f64,
    /// Processed frames per wall-clock second, when a clock was supplied.
    pub fps: Option<f64>,
}

/// Per-frame log of a monitored drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl DriveTrace {
    pub fn crash_count(&self) -> usize {
        self.rows.iter().filter(|r| r.crashed).count()
    }

    pub fn alert_count(&self) -> usize {
        self.rows.iter().filter(|r| r.alert).count()
    }

    /// Frames strictly increasing, `t == frame * dt`, finite measures.
    pub fn validate(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(Error::InvalidArgument(alloc::format!(
                    "frame {} follows frame {}",
                    w[1].frame,
                    w[0].frame
                )));
            }
        }
        for r in &self.rows {
            if r.t != r.frame as f64 * self.meta.dt {
                return Err(Error::InvalidArgument(alloc::format!(
                    "frame {} has t {} instead of {}",
                    r.frame,
                    r.t,
                    r.frame as f64 * self.meta.dt
                )));
            }
            let m = r.measures;
            if [m.vr, m.entropy, m.mi, m.variance].into_iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("trace measures"));
            }
        }
        Ok(())
    }
}

/// Live notifications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MonitorEvent {
    Alert {
        frame: u64,
        t: f64,
        angle_deg: f64,
        #[serde(flatten)]
        measures: Measures,
    },
    Crash {
        frame: u64,
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub duration_s: f64,
    pub passes: usize,
    pub seed: u64,
    pub tau: f64,
    pub sim: SimConfig,
    pub camera: Camera,
    pub thresholds: ThresholdSet,
    pub model_id: String,
}

impl DriveConfig {
    pub fn new(duration_s: f64, thresholds: ThresholdSet, tau: f64, seed: u64) -> Self {
        Self {
            duration_s,
            passes: DEFAULT_PASSES,
            seed,
            tau,
            sim: SimConfig::default(),
            camera: Camera::fast(),
            thresholds,
            model_id: String::new(),
        }
    }

    pub fn frames(&self) -> usize {
        crate::math::round(self.duration_s / self.sim.dt) as usize
    }
}

/// Drives `track` under network control for `cfg.duration_s` simulated
/// seconds.
///
/// `clock` returns wall-clock seconds and is read before the first and
/// after the last frame to measure throughput. `sink` receives alert and
/// crash events in frame order. Frame `f` draws its dropout masks from
/// seed `derive(cfg.seed, f)`, so traces depend only on the inputs.
pub fn run_monitored_drive(
    net: &Network,
    track: &Track,
    cfg: &DriveConfig,
    clock: &mut dyn FnMut() -> Option<f64>,
    sink: &mut dyn FnMut(&MonitorEvent),
) -> Result<DriveTrace> {
    if !(cfg.duration_s >= 1.0) || !cfg.duration_s.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "duration {} s must be at least 1 s",
            cfg.duration_s
        )));
    }
    cfg.thresholds.validate()?;
    cfg.camera.validate()?;
    if cfg.camera.shape() != net.spec().input_shape {
        return Err(Error::ShapeMismatch {
            expected: net.spec().input_shape.to_vec(),
            actual: cfg.camera.shape().to_vec(),
        });
    }
    let n = cfg.frames();
    let mut rows = Vec::with_capacity(n);
    let mut state = track.start_state(cfg.sim.speed);
    let mut last_crash: Option<f64> = None;
    let start = clock();
    for _ in 0..n {
        let armed = last_crash.is_none_or(|c| state.t - c >= cfg.sim.refractory_s);
        let crashed = armed && detect_crash(track, &state);
        if crashed {
            last_crash = Some(state.t);
            sink(&MonitorEvent::Crash {
                frame: state.frame,
                t: state.t,
            });
            state = respawn(track, &state, cfg.sim.respawn_ahead_m);
        }
        let image = render_camera(track, &state, &cfg.camera)?;
        let samples = mc_samples(net, &image, cfg.passes, derive(cfg.seed, state.frame))?;
        let report = summarize(&samples, cfg.tau)?;
        let measures = Measures::from_report(&report);
        let angle_deg = report.prediction_deg();
        let alert = cfg.thresholds.fires(&measures);
        if alert {
            sink(&MonitorEvent::Alert {
                frame: state.frame,
                t: state.t,
                angle_deg,
                measures,
            });
        }
        rows.push(TraceRow {
            frame: state.frame,
            t: state.t,
            angle_deg,
            measures,
            crashed,
            alert,
        });
        state = step(&state, angle_deg, cfg.sim.dt)?;
        if !state.is_finite() {
            return Err(Error::NonFinite("simulator state"));
        }
    }
    let fps = match (start, clock()) {
        (Some(a), Some(b)) if b > a => Some(n as f64 / (b - a)),
        _ => None,
    };
    Ok(DriveTrace {
        meta: TraceMeta {
            model_id: cfg.model_id.clone(),
            track: track.name().into(),
            passes: cfg.passes,
            tau: cfg.tau,
            thresholds: cfg.thresholds.clone(),
            seed: cfg.seed,
            dt: cfg.sim.dt,
            speed: cfg.sim.speed,
            fps,
        },
        rows,
    })
}

/// Recomputes the alert column under new thresholds.
pub fn replay(trace: &DriveTrace, thresholds: &ThresholdSet) -> Result<DriveTrace> {
    thresholds.validate()?;
    let mut out = trace.clone();
    out.meta.thresholds = thresholds.clone();
    for r in &mut out.rows {
        r.alert = thresholds.fires(&r.measures);
    }
    Ok(out)
}
