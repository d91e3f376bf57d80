//! Steering datasets: collection from the simulator, mirror augmentation,
//! angle bucketing and train/test splits.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::round;
use crate::nn::{Head, HeadKind, Mode, Network, Target, TrainingSet};
use crate::rng::{below, shuffle, stream_rng, uniform};
use crate::sim::{
    detect_crash, expert_steering, render_camera, respawn, safety_oracle, step, Camera, OracleMode, Safety,
    SimConfig, SimState, Track,
};
use crate::{Error, Result, Tensor, MAX_STEER_DEG};

/// Number of steering classes.
pub const NUM_CLASSES: usize = 200;
/// Width of one steering class, degrees.
pub const BUCKET_WIDTH_DEG: f64 = 0.25;
/// Current on-disk format version.
pub const FORMAT_VERSION: u32 = 1;

/// Class of the grid point nearest to `angle`; +25 maps to the last class.
pub fn bucket_angle(angle: f64) -> Result<usize> {
    if !(-MAX_STEER_DEG..=MAX_STEER_DEG).contains(&angle) {
        return Err(Error::AngleOutOfRange(angle));
    }
    let c = round((angle + MAX_STEER_DEG) / BUCKET_WIDTH_DEG);
    Ok((c as usize).min(NUM_CLASSES - 1))
}

/// Grid point of a class, degrees.
pub fn unbucket(class: usize) -> f64 {
    -MAX_STEER_DEG + BUCKET_WIDTH_DEG * class as f64
}

/// Where a frame was taken, for oracle labeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    /// Index into the dataset's tracks.
    pub track: usize,
    /// State in the unmirrored world.
    pub state: SimState,
    /// The image and angle are reflections of what the state saw.
    pub mirrored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    /// Applied steering, degrees.
    pub angle: f64,
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub count: usize,
    pub angle_unit: String,
    pub seed: u64,
    pub source: String,
}

/// Ordered `(image, angle)` samples sharing one image shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: [usize; 3],
    seed: u64,
    source: String,
    samples: Vec<Sample>,
    tracks: Vec<Track>,
}

impl Dataset {
    /// Checks image shapes, angle range and origin track indices.
    pub fn new(
        shape: [usize; 3],
        seed: u64,
        source: String,
        samples: Vec<Sample>,
        tracks: Vec<Track>,
    ) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidArgument(alloc::format!("image shape {shape:?}")));
        }
        for s in &samples {
            if s.image.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: shape.to_vec(),
                    actual: s.image.shape().to_vec(),
                });
            }
            if !(-MAX_STEER_DEG..=MAX_STEER_DEG).contains(&s.angle) {
                return Err(Error::AngleOutOfRange(s.angle));
            }
            if let Some(o) = s.origin {
                if o.track >= tracks.len() {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "origin track {} of {}",
                        o.track,
                        tracks.len()
                    )));
                }
            }
        }
        Ok(Self {
            shape,
            seed,
            source,
            samples,
            tracks,
        })
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            version: FORMAT_VERSION,
            height: self.shape[0],
            width: self.shape[1],
            channels: self.shape[2],
            count: self.samples.len(),
            angle_unit: "degrees".into(),
            seed: self.seed,
            source: self.source.clone(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True when every sample carries its origin state.
    pub fn has_origins(&self) -> bool {
        self.samples.iter().all(|s| s.origin.is_some())
    }

    pub fn into_parts(self) -> (Vec<Sample>, Vec<Track>) {
        (self.samples, self.tracks)
    }

    /// Oracle verdict for steering sample `i` at `angle` degrees.
    pub fn safety(&self, i: usize, angle: f64, mode: OracleMode) -> Result<Safety> {
        let sample = self
            .samples
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("sample {i} of {}", self.len())))?;
        let Some(origin) = sample.origin else {
            return Err(Error::InvalidArgument(alloc::format!("sample {i} has no origin state")));
        };
        let a = if origin.mirrored { -angle } else { angle };
        Ok(safety_oracle(&self.tracks[origin.track], &origin.state, a, mode))
    }

    /// Training view with targets for `head`.
    pub fn labeled(&self, head: HeadKind) -> Result<Labeled<'_>> {
        let targets = self
            .samples
            .iter()
            .map(|s| match head {
                HeadKind::Regression => Ok(Target::Value(s.angle / MAX_STEER_DEG)),
                HeadKind::Classification => bucket_angle(s.angle).map(Target::Class),
            })
            .collect::<Result<_>>()?;
        Ok(Labeled { data: self, targets })
    }
}

/// A dataset with network targets attached.
pub struct Labeled<'a> {
    data: &'a Dataset,
    targets: Vec<Target>,
}

impl TrainingSet for Labeled<'_> {
    fn len(&self) -> usize {
        self.targets.len()
    }
    fn input(&self, i: usize) -> &[f64] {
        self.data.samples[i].image.data()
    }
    fn target(&self, i: usize) -> Target {
        self.targets[i]
    }
}

/// Input samples followed by their horizontal mirrors with negated angles.
pub fn augment_mirror(d: Dataset) -> Result<Dataset> {
    let mut samples = d.samples;
    let n = samples.len();
    samples.reserve(n);
    for i in 0..n {
        let s = &samples[i];
        let twin = Sample {
            image: s.image.flip_horizontal()?,
            angle: -s.angle,
            origin: s.origin.map(|o| Origin {
                mirrored: !o.mirrored,
                ..o
            }),
        };
        samples.push(twin);
    }
    Ok(Dataset { samples, ..d })
}

/// Seeded shuffle, then the first `floor(count * test_fraction)` go to test.
pub fn split(d: Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let n = d.samples.len();
    let n_test = (n as f64 * test_fraction) as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidArgument(alloc::format!(
            "splitting {n} samples at {test_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut stream_rng(seed, 0), &mut order);
    let mut slots: Vec<Option<Sample>> = d.samples.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<Sample> { idx.iter().map(|&i| slots[i].take().unwrap()).collect() };
    let test = take(&order[..n_test]);
    let train = take(&order[n_test..]);
    let side = |samples| Dataset {
        shape: d.shape,
        seed: d.seed,
        source: d.source.clone(),
        samples,
        tracks: d.tracks.clone(),
    };
    Ok((side(train), side(test)))
}

/// Who steers during collection.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Expert,
    /// Deterministic network output.
    Model(&'a Network),
}

/// Random kicks that push the car off the racing line so the expert's
/// recovery steering is recorded too.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    /// Probability of a kick at each frame.
    pub rate: f64,
    /// Heading kicks are uniform in +/- this many radians.
    pub max_heading_rad: f64,
    /// Sideways kicks are uniform in +/- this many meters.
    pub max_offset_m: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self {
            rate: 0.04,
            max_heading_rad: 0.25,
            max_offset_m: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    pub sim: SimConfig,
    pub camera: Camera,
    pub disturbance: Option<Disturbance>,
    /// Collection fails once the policy crashes more often than this.
    pub crash_budget: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            camera: Camera::fast(),
            disturbance: Some(Disturbance::default()),
            crash_budget: 5,
        }
    }
}

/// Steering of `net` on one image without dropout, degrees.
pub fn predict_angle(net: &Network, image: &Tensor) -> Result<f64> {
    let out = net.forward(image, Mode::Deterministic, 0)?;
    Ok(match net.spec().head {
        Head::Regression => (out.data()[0] * MAX_STEER_DEG).clamp(-MAX_STEER_DEG, MAX_STEER_DEG),
        Head::Classification { .. } => unbucket(crate::math::argmax(out.data())),
    })
}

/// Drives `n_frames` frames and records each rendered frame with the
/// steering applied at it. Angles and pixels are stored at 32-bit precision.
pub fn collect_run(track: &Track, policy: Policy<'_>, n_frames: usize, seed: u64, cfg: &CollectConfig) -> Result<Dataset> {
    if n_frames == 0 {
        return Err(Error::InvalidArgument("n_frames must be at least 1".into()));
    }
    cfg.camera.validate()?;
    let mut rng = stream_rng(seed, 0);
    let mut state = track.start_state(cfg.sim.speed);
    let mut samples = Vec::with_capacity(n_frames);
    let mut crashes = 0;
    for _ in 0..n_frames {
        if let Some(d) = cfg.disturbance {
            if uniform(&mut rng) < d.rate {
                let dh = (2.0 * uniform(&mut rng) - 1.0) * d.max_heading_rad;
                let off = (2.0 * uniform(&mut rng) - 1.0) * d.max_offset_m;
                let (s, c) = (crate::math::sin(state.heading), crate::math::cos(state.heading));
                state.x += off * s;
                state.y -= off * c;
                state.heading += dh;
            }
        }
        let mut image = render_camera(track, &state, &cfg.camera)?;
        image.round_to_f32();
        let raw = match policy {
            Policy::Expert => expert_steering(track, &state)?,
            Policy::Model(net) => predict_angle(net, &image)?,
        };
        let angle = raw.clamp(-MAX_STEER_DEG, MAX_STEER_DEG) as f32 as f64;
        samples.push(Sample {
            image,
            angle,
            origin: Some(Origin {
                track: 0,
                state,
                mirrored: false,
            }),
        });
        state = step(&state, angle, cfg.sim.dt)?;
        if detect_crash(track, &state) {
            crashes += 1;
            if crashes > cfg.crash_budget {
                return Err(Error::CrashBudgetExceeded {
                    crashes,
                    budget: cfg.crash_budget,
                });
            }
            state = respawn(track, &state, cfg.sim.respawn_ahead_m);
        }
    }
    let source = match policy {
        Policy::Expert => alloc::format!("expert:{}", track.name()),
        Policy::Model(_) => alloc::format!("model:{}", track.name()),
    };
    Dataset::new(cfg.camera.shape(), seed, source, samples, alloc::vec![track.clone()])
}

/// Concatenates datasets of one image shape, keeping every origin.
pub fn concat(parts: Vec<Dataset>, seed: u64, source: String) -> Result<Dataset> {
    let Some(first) = parts.first() else {
        return Err(Error::Empty("datasets"));
    };
    let shape = first.shape;
    let mut tracks: Vec<Track> = Vec::new();
    let mut samples = Vec::new();
    for p in parts {
        if p.shape != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: p.shape.to_vec(),
            });
        }
        let offset = tracks.len();
        tracks.extend(p.tracks);
        samples.extend(p.samples.into_iter().map(|mut s| {
            if let Some(o) = &mut s.origin {
                o.track += offset;
            }
            s
        }));
    }
    Dataset::new(shape, seed, source, samples, tracks)
}

/// `n` distinct indices below `len`, seeded.
pub fn sample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, 0);
    let mut idx: Vec<usize> = (0..len).collect();
    let n = n.min(len);
    for i in 0..n {
        let j = i + below(&mut rng, len - i);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TrackPreset;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn tiny(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample {
                image: Tensor::new(vec![1, 2, 1], vec![i as f64, -(i as f64)]).unwrap(),
                angle: (i as f64 * 0.5) - 2.0,
                origin: None,
            })
            .collect();
        Dataset::new([1, 2, 1], 7, "test".to_string(), samples, vec![]).unwrap()
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(bucket_angle(-25.0).unwrap(), 0);
        assert_eq!(unbucket(0), -25.0);
        assert_eq!(bucket_angle(0.0).unwrap(), 100);
        assert_eq!(unbucket(100), 0.0);
        assert_eq!(bucket_angle(25.0).unwrap(), 199);
        assert_eq!(unbucket(199), 24.75);
        assert!(matches!(bucket_angle(25.01), Err(Error::AngleOutOfRange(_))));
        assert!(bucket_angle(f64::NAN).is_err());
    }

    #[test]
    fn bucket_reflects_around_center() {
        for c in 1..NUM_CLASSES {
            let a = unbucket(c);
            assert_eq!(bucket_angle(-a).unwrap(), 200 - c);
        }
    }

    proptest! {
        #[test]
        fn quantization_error_bounded(a in -25.0f64..=25.0) {
            let err = (unbucket(bucket_angle(a).unwrap()) - a).abs();
            if a <= 24.875 {
                prop_assert!(err <= 0.125 + 1e-12);
            } else {
                prop_assert!(err <= 0.25 + 1e-12);
            }
        }
    }

    #[test]
    fn mirror_doubles_and_is_an_involution() {
        let d = tiny(5);
        let m = augment_mirror(d.clone()).unwrap();
        assert_eq!(m.len(), 10);
        assert_eq!(&m.samples()[..5], d.samples());
        let sum: f64 = m.samples().iter().map(|s| s.angle).sum();
        assert_eq!(sum, 0.0);
        let twins = Dataset::new([1, 2, 1], 7, "t".into(), m.samples()[5..].to_vec(), vec![]).unwrap();
        let back = augment_mirror(twins).unwrap();
        assert_eq!(&back.samples()[5..], d.samples());
        let zero = m.samples().iter().position(|s| s.angle == 0.0).unwrap();
        assert_eq!(m.samples()[zero + 5].angle, 0.0);
    }

    #[test]
    fn mirror_count_example() {
        let samples = vec![
            Sample {
                image: Tensor::zeros(vec![1, 1, 1]),
                angle: 1.0,
                origin: None,
            };
            8037
        ];
        let d = Dataset::new([1, 1, 1], 0, "x".into(), samples, vec![]).unwrap();
        assert_eq!(augment_mirror(d).unwrap().len(), 16074);
    }

    #[test]
    fn split_partitions() {
        let d = tiny(10);
        let (train, test) = split(d.clone(), 0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let (train2, test2) = split(d.clone(), 0.2, 3).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let mut all: Vec<f64> = train.samples().iter().chain(test.samples()).map(|s| s.angle).collect();
        all.sort_by(f64::total_cmp);
        let orig: Vec<f64> = d.samples().iter().map(|s| s.angle).collect();
        assert_eq!(all, orig);
        assert!(split(tiny(3), 0.2, 0).is_err());
        assert!(split(tiny(10), 0.0, 0).is_err());
        assert!(split(tiny(10), 1.0, 0).is_err());
    }

    #[test]
    fn dataset_validation() {
        let bad = Sample {
            image: Tensor::zeros(vec![1, 1, 1]),
            angle: 30.0,
            origin: None,
        };
        assert!(Dataset::new([1, 1, 1], 0, "x".into(), vec![bad.clone()], vec![]).is_err());
        let wrong = Sample { angle: 0.0, ..bad };
        assert!(Dataset::new([1, 2, 1], 0, "x".into(), vec![wrong], vec![]).is_err());
        assert!(Dataset::new([1, 2, 1], 0, "x".into(), vec![], vec![]).unwrap().is_empty());
    }

    #[test]
    fn collect_counts_and_determinism() {
        let t = TrackPreset::Oval.build();
        let cfg = CollectConfig::default();
        let a = collect_run(&t, Policy::Expert, 10, 4, &cfg).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, collect_run(&t, Policy::Expert, 10, 4, &cfg).unwrap());
        assert!(collect_run(&t, Policy::Expert, 0, 4, &cfg).is_err());
        for s in a.samples() {
            assert_eq!(s.angle, s.angle as f32 as f64);
            assert!(s.image.data().iter().all(|&v| v == v as f32 as f64));
        }
    }

    #[test]
    fn expert_on_straight_keeps_wheel_centered() {
        // The oval starts at the beginning of a 120 m straight.
        let t = TrackPreset::Oval.build();
        let cfg = CollectConfig {
            disturbance: None,
            ..CollectConfig::default()
        };
        let d = collect_run(&t, Policy::Expert, 80, 0, &cfg).unwrap();
        for s in &d.samples()[..80] {
            let ahead = s.origin.unwrap().state.x + crate::sim::LOOKAHEAD_M;
            if ahead < t.points()[0][0] + 115.0 {
                assert!(s.angle.abs() <= 0.5, "angle {}", s.angle);
            }
        }
    }

    #[test]
    fn model_policy_is_recorded() {
        let t = TrackPreset::Oval.build();
        let net = Network::new(
            crate::nn::build_preset(HeadKind::Classification, crate::nn::PresetScale::Fast),
            1,
        )
        .unwrap();
        let cfg = CollectConfig {
            disturbance: None,
            crash_budget: 100,
            ..CollectConfig::default()
        };
        let d = collect_run(&t, Policy::Model(&net), 5, 0, &cfg).unwrap();
        for s in d.samples() {
            assert_eq!(s.angle, predict_angle(&net, &s.image).unwrap().clamp(-25.0, 25.0));
        }
    }

    #[test]
    fn crash_budget_enforced() {
        let t = TrackPreset::Oval.build();
        let net = Network::new(crate::nn::build_preset(HeadKind::Regression, crate::nn::PresetScale::Fast), 9).unwrap();
        // A constant hard turn leaves the road within a few seconds.
        let mut params = net.params().to_vec();
        let last = params.iter_mut().rev().find_map(|p| p.as_mut()).unwrap();
        last.kernel.data_mut().iter_mut().for_each(|w| *w = 0.0);
        last.bias.data_mut()[0] = 1.0;
        let net = Network::from_params(net.spec().clone(), params).unwrap();
        let cfg = CollectConfig {
            disturbance: None,
            crash_budget: 0,
            ..CollectConfig::default()
        };
        assert!(matches!(
            collect_run(&t, Policy::Model(&net), 300, 0, &cfg),
            Err(Error::CrashBudgetExceeded { .. })
        ));
    }

    #[test]
    fn mirrored_sample_oracle_matches_world_mirror() {
        let t = TrackPreset::Figure8.build();
        let d = collect_run(&t, Policy::Expert, 30, 2, &CollectConfig::default()).unwrap();
        let m = augment_mirror(d).unwrap();
        for i in 0..30 {
            for a in [-20.0, -3.0, 0.0, 7.5, 25.0] {
                let orig = m.safety(i, a, OracleMode::Arc).unwrap();
                assert_eq!(m.safety(i + 30, -a, OracleMode::Arc).unwrap(), orig);
            }
        }
    }

    #[test]
    fn concat_keeps_origins_of_every_track() {
        let cfg = CollectConfig::default();
        let oval = TrackPreset::Oval.build();
        let fig = TrackPreset::Figure8.build();
        let a = collect_run(&oval, Policy::Expert, 4, 1, &cfg).unwrap();
        let b = collect_run(&fig, Policy::Expert, 3, 1, &cfg).unwrap();
        let c = concat(vec![a.clone(), b.clone()], 0, "both".into()).unwrap();
        assert_eq!(c.len(), 7);
        assert_eq!(c.tracks().len(), 2);
        assert_eq!(c.samples()[5].origin.unwrap().track, 1);
        for i in 0..3 {
            assert_eq!(
                c.safety(4 + i, 10.0, OracleMode::Line).unwrap(),
                b.safety(i, 10.0, OracleMode::Line).unwrap()
            );
        }
    }

    #[test]
    fn labeled_targets() {
        let d = tiny(4);
        let l = d.labeled(HeadKind::Classification).unwrap();
        assert_eq!(l.target(0), Target::Class(bucket_angle(-2.0).unwrap()));
        let r = d.labeled(HeadKind::Regression).unwrap();
        assert_eq!(r.target(0), Target::Value(-2.0 / 25.0));
        assert_eq!(r.input(1), &[1.0, -1.0]);
    }

    #[test]
    fn sample_indices_distinct() {
        let mut idx = sample_indices(50, 20, 1);
        assert_eq!(idx, sample_indices(50, 20, 1));
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 20);
        assert_eq!(sample_indices(5, 20, 1).len(), 5);
    }
}
