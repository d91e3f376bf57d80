//! Run configuration: defaults for every stage, overridable from a JSON
//! file and then from command-line flags.

use std::path::Path;

use dropdrive_core::data::Disturbance;
use dropdrive_core::eval::{DEFAULT_MAX_FPR, DEFAULT_WINDOW_S};
use dropdrive_core::monitor::ThresholdSet;
use dropdrive_core::nn::{HeadKind, PresetScale, DEFAULT_L2_LAMBDA, DEFAULT_P_DROP};
use dropdrive_core::sim::{Camera, OracleMode, SimConfig};
use dropdrive_core::uncertainty::{Measure, DEFAULT_PASSES};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::json::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub collect: CollectSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub tau: TauSection,
    pub passes: usize,
    pub static_eval: StaticSection,
    pub drive: DriveSection,
    pub crash: CrashSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectSection {
    pub tracks: Vec<String>,
    pub frames_per_track: usize,
    pub test_fraction: f64,
    /// Mirror the training side.
    pub mirror: bool,
    pub disturbance: Option<Disturbance>,
    pub crash_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub arch: HeadKind,
    pub preset: PresetScale,
    pub p_drop: f64,
    pub l2_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauSection {
    /// Precision used as is; when absent it follows from `length_scale`,
    /// the model's dropout and L2 settings and its training-set size.
    pub value: Option<f64>,
    pub length_scale: f64,
    pub grid_length_scales: Vec<f64>,
    pub grid_lambdas: Vec<f64>,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaticSection {
    pub sample_n: usize,
    pub oracle: OracleMode,
    pub max_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub track: String,
    pub duration_s: f64,
    pub thresholds: ThresholdSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrashSection {
    pub n_list: Vec<u32>,
    pub window_s: f64,
    pub max_fpr: f64,
    pub measure: Measure,
    /// Threshold of the peak table; defaults to the one chosen at the best n.
    pub peak_threshold: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sim: SimConfig::default(),
            collect: CollectSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            tau: TauSection::default(),
            passes: DEFAULT_PASSES,
            static_eval: StaticSection::default(),
            drive: DriveSection::default(),
            crash: CrashSection::default(),
        }
    }
}

impl Default for CollectSection {
    fn default() -> Self {
        Self {
            tracks: vec!["oval".into(), "figure8".into()],
            frames_per_track: 3750,
            test_fraction: 0.2,
            mirror: true,
            disturbance: Some(Disturbance::default()),
            crash_budget: 5,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: HeadKind::Classification,
            preset: PresetScale::Fast,
            p_drop: DEFAULT_P_DROP,
            l2_lambda: DEFAULT_L2_LAMBDA,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
        }
    }
}

impl Default for TauSection {
    fn default() -> Self {
        Self {
            value: None,
            length_scale: 0.01,
            grid_length_scales: vec![0.01, 0.1, 1.0],
            grid_lambdas: vec![1e-6, 1e-5, 1e-4],
            validation_fraction: 0.2,
        }
    }
}

impl Default for StaticSection {
    fn default() -> Self {
        Self {
            sample_n: 200,
            oracle: OracleMode::Arc,
            max_fpr: DEFAULT_MAX_FPR,
        }
    }
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            track: "oval".into(),
            duration_s: 120.0,
            thresholds: ThresholdSet::single(Measure::MutualInformation, 0.5).expect("finite threshold"),
        }
    }
}

impl Default for CrashSection {
    fn default() -> Self {
        Self {
            n_list: (1..=6).collect(),
            window_s: DEFAULT_WINDOW_S,
            max_fpr: DEFAULT_MAX_FPR,
            measure: Measure::MutualInformation,
            peak_threshold: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_json(p),
            None => Ok(Self::default()),
        }
    }

    pub fn camera(&self) -> Camera {
        match self.model.preset {
            PresetScale::Fast => Camera::fast(),
            PresetScale::Full => Camera::full(),
        }
    }
}
