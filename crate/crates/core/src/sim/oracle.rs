use serde::{Deserialize, Serialize};

use super::{SimState, Track, WHEELBASE_M};
use crate::math::{cos, deg_to_rad, fabs, sin, tan};

/// Seconds of travel covered by the projected path.
pub const ORACLE_HORIZON_S: f64 = 3.0;
/// Points checked along the projected path, including the car position.
pub const ORACLE_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Straight segment pointing at the steering angle.
    Line,
    /// Circular arc driven at constant steering.
    Arc,
}

impl OracleMode {
    pub fn name(self) -> &'static str {
        match self {
            OracleMode::Line => "line",
            OracleMode::Arc => "arc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Safety {
    Safe,
    Unsafe,
}

/// Geometric safe/unsafe label for steering `angle` degrees at `state`.
///
/// Samples `ORACLE_SAMPLES` evenly spaced points over `speed * 3 s` of
/// path, starting at the car, and calls the angle safe iff every point is
/// within the half width of the centerline. In line mode the path is a
/// straight segment rotated from the heading by the angle (right
/// positive); in arc mode it is the constant-steering bicycle arc.
pub fn safety_oracle(track: &Track, state: &SimState, angle: f64, mode: OracleMode) -> Safety {
    let length = state.speed * ORACLE_HORIZON_S;
    let hw = track.half_width();
    let curvature = tan(deg_to_rad(angle)) / WHEELBASE_M;
    for k in 0..ORACLE_SAMPLES {
        let s = length * k as f64 / (ORACLE_SAMPLES - 1) as f64;
        let p = match mode {
            OracleMode::Line => {
                let dir = state.heading - deg_to_rad(angle);
                [state.x + s * cos(dir), state.y + s * sin(dir)]
            }
            OracleMode::Arc if fabs(curvature) < 1e-12 => {
                [state.x + s * cos(state.heading), state.y + s * sin(state.heading)]
            }
            OracleMode::Arc => {
                let theta = state.heading - curvature * s;
                [
                    state.x + (sin(state.heading) - sin(theta)) / curvature,
                    state.y + (cos(theta) - cos(state.heading)) / curvature,
                ]
            }
        };
        if track.project(p).distance > hw {
            return Safety::Unsafe;
        }
    }
    Safety::Safe
}
