//! Headless 2-D driving world.
//!
//! Coordinates are meters in a right-handed plane; heading is measured
//! counter-clockwise from +x. Steering angles are degrees with positive
//! values turning right (clockwise), limited to +/-25.

mod camera;
mod expert;
mod oracle;
mod track;

pub use camera::{render_camera, Camera};
pub use expert::{expert_steering, LOOKAHEAD_M};
pub use oracle::{safety_oracle, OracleMode, Safety, ORACLE_HORIZON_S, ORACLE_SAMPLES};
pub use track::{Projection, Track, TrackDef, TrackPreset};

use serde::{Deserialize, Serialize};

use crate::math::{cos, deg_to_rad, sin, tan};
use crate::{Error, Result, MAX_STEER_DEG};

/// Distance between axles, meters.
pub const WHEELBASE_M: f64 = 2.5;
/// Simulated frame period (6 frames per second).
pub const DEFAULT_DT: f64 = 1.0 / 6.0;
/// Constant forward speed, m/s (about 15 mph).
pub const DEFAULT_SPEED: f64 = 6.7;

/// World parameters shared by collection and monitored drives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub speed: f64,
    /// After a crash the car is placed this far ahead on the centerline.
    pub respawn_ahead_m: f64,
    /// Crash checks are suspended for this long after a recorded crash.
    pub refractory_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            speed: DEFAULT_SPEED,
            respawn_ahead_m: 5.0,
            refractory_s: 2.0,
        }
    }
}

/// Instantaneous car state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub x: f64,
    pub y: f64,
    /// Radians, counter-clockwise from +x.
    pub heading: f64,
    pub speed: f64,
    /// Last applied steering, degrees.
    pub steering: f64,
    pub t: f64,
    pub frame: u64,
}

impl SimState {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Reflection across the x axis.
    pub fn mirrored(&self) -> Self {
        Self {
            y: -self.y,
            heading: -self.heading,
            steering: -self.steering,
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.heading.is_finite()
            && self.speed.is_finite()
            && self.steering.is_finite()
            && self.t.is_finite()
    }
}

/// Kinematic bicycle update.
///
/// The steering command is clamped to +/-25 degrees; heading changes by
/// `-(speed / wheelbase) * tan(steer) * dt` and the car then advances
/// `speed * dt` along the new heading. Time stays on the `frame * dt` grid
/// when it started there.
pub fn step(state: &SimState, steering_cmd: f64, dt: f64) -> Result<SimState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("dt {dt} must be positive")));
    }
    if !state.is_finite() || !steering_cmd.is_finite() {
        return Err(Error::NonFinite("simulator state"));
    }
    let steering = steering_cmd.clamp(-MAX_STEER_DEG, MAX_STEER_DEG);
    let heading = state.heading - state.speed / WHEELBASE_M * tan(deg_to_rad(steering)) * dt;
    let dist = state.speed * dt;
    let frame = state.frame + 1;
    let t = if state.t == state.frame as f64 * dt {
        frame as f64 * dt
    } else {
        state.t + dt
    };
    Ok(SimState {
        x: state.x + dist * cos(heading),
        y: state.y + dist * sin(heading),
        heading,
        speed: state.speed,
        steering,
        t,
        frame,
    })
}

/// True iff the car is strictly farther than the half width from the centerline.
pub fn detect_crash(track: &Track, state: &SimState) -> bool {
    track.project(state.position()).distance > track.half_width()
}

/// Places the car on the centerline `ahead` meters past its projection,
/// aligned with the road and with zero steering. Time and frame are kept.
pub fn respawn(track: &Track, state: &SimState, ahead: f64) -> SimState {
    let s = track.project(state.position()).along + ahead;
    let [x, y] = track.point_at(s);
    SimState {
        x,
        y,
        heading: track.heading_at(s),
        steering: 0.0,
        ..*state
    }
}
