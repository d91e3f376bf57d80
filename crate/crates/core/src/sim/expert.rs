use super::{SimState, Track, WHEELBASE_M};
use crate::math::{atan2, cos, rad_to_deg, sin, sqrt};
use crate::{Error, Result, MAX_STEER_DEG};

/// Pure-pursuit look-ahead distance along the centerline, meters.
pub const LOOKAHEAD_M: f64 = 9.0;

/// Pure-pursuit steering toward the centerline point `LOOKAHEAD_M` ahead.
///
/// Returns degrees, positive to the right, clamped to +/-25. Fails when the
/// car is more than twice the half width from the centerline.
pub fn expert_steering(track: &Track, state: &SimState) -> Result<f64> {
    let proj = track.project(state.position());
    if proj.distance > 2.0 * track.half_width() || !state.is_finite() {
        return Err(Error::OffTrack {
            distance: proj.distance,
        });
    }
    let target = track.point_at(proj.along + LOOKAHEAD_M);
    let (dx, dy) = (target[0] - state.x, target[1] - state.y);
    let (c, s) = (cos(state.heading), sin(state.heading));
    let ahead = dx * c + dy * s;
    let left = -dx * s + dy * c;
    let dist = sqrt(dx * dx + dy * dy);
    let alpha = atan2(left, ahead);
    let left_turn = atan2(2.0 * WHEELBASE_M * sin(alpha), dist);
    Ok((-rad_to_deg(left_turn)).clamp(-MAX_STEER_DEG, MAX_STEER_DEG))
}
