use alloc::vec;
use serde::{Deserialize, Serialize};

use super::{SimState, Track};
use crate::math::{cos, floor, sin, sqrt};
use crate::{Error, Result, Tensor};

const PALETTE: [[f64; 3]; 4] = [
    [0.30, 0.55, 0.25],
    [0.42, 0.42, 0.45],
    [0.95, 0.95, 0.95],
    [0.95, 0.80, 0.20],
];
const GRASS: usize = 0;
const ROAD: usize = 1;
const EDGE: usize = 2;
const DASH: usize = 3;
const EDGE_WIDTH_M: f64 = 0.3;
const DASH_HALF_WIDTH_M: f64 = 0.15;
const DASH_PERIOD_M: f64 = 6.0;

/// Forward-looking pinhole camera over a flat ground plane.
///
/// Image rows map to look-ahead distances from `far_m` (top row) to
/// `near_m` (bottom row); the horizontal field of view spans
/// `+/-half_span_near_m` at the near distance and widens linearly with
/// distance. Each pixel averages `supersample x supersample` ground
/// samples; the factor must be a power of two so that mirrored pixel
/// positions are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub height: usize,
    pub width: usize,
    pub near_m: f64,
    pub far_m: f64,
    pub half_span_near_m: f64,
    pub supersample: usize,
}

impl Camera {
    /// 66x200 image.
    pub fn full() -> Self {
        Self {
            height: 66,
            width: 200,
            ..Self::fast()
        }
    }

    /// 33x100 image.
    pub fn fast() -> Self {
        Self {
            height: 33,
            width: 100,
            near_m: 2.5,
            far_m: 30.0,
            half_span_near_m: 3.0,
            supersample: 2,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, 3]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.height >= 1
            && self.width >= 1
            && self.near_m > 0.0
            && self.far_m > self.near_m
            && self.half_span_near_m > 0.0
            && self.supersample.is_power_of_two();
        if !ok {
            return Err(Error::InvalidArgument(alloc::format!(
                "degenerate camera {self:?}"
            )));
        }
        Ok(())
    }

    /// Farthest ground point seen, measured from the car.
    fn reach(&self) -> f64 {
        let lateral = self.half_span_near_m * self.far_m / self.near_m;
        sqrt(self.far_m * self.far_m + lateral * lateral)
    }
}

/// Renders the road ahead as a `[height, width, 3]` image with values in `[0, 1]`.
pub fn render_camera(track: &Track, state: &SimState, camera: &Camera) -> Result<Tensor> {
    camera.validate()?;
    if !state.is_finite() {
        return Err(Error::NonFinite("simulator state"));
    }
    let (h, w, ss) = (camera.height, camera.width, camera.supersample);
    let hw = track.half_width();
    let near_segments = track.segments_near(state.position(), camera.reach() + hw + 1.0);

    // Row v (0 at the top edge, h at the bottom) sees distance k / (v - v_h).
    let k = h as f64 / (1.0 / camera.near_m - 1.0 / camera.far_m);
    let v_h = -k / camera.far_m;
    let lateral_per_unit = camera.half_span_near_m / camera.near_m / (w as f64 / 2.0);
    let (fx, fy) = (cos(state.heading), sin(state.heading));
    let (rx, ry) = (fy, -fx);
    let inv = 1.0 / (ss * ss) as f64;

    let mut data = vec![0.0; h * w * 3];
    for row in 0..h {
        for col in 0..w {
            // Palette counts keep the average independent of sample order.
            let mut counts = [0usize; PALETTE.len()];
            for a in 0..ss {
                let v = row as f64 + (a as f64 + 0.5) / ss as f64;
                let dist = k / (v - v_h);
                for b in 0..ss {
                    let u = col as f64 + (b as f64 + 0.5) / ss as f64 - w as f64 / 2.0;
                    let lateral = u * lateral_per_unit * dist;
                    let p = [
                        state.x + dist * fx + lateral * rx,
                        state.y + dist * fy + lateral * ry,
                    ];
                    counts[shade(track, p, &near_segments, hw)] += 1;
                }
            }
            let px = &mut data[(row * w + col) * 3..][..3];
            for (ch, dst) in px.iter_mut().enumerate() {
                *dst = counts
                    .iter()
                    .zip(&PALETTE)
                    .map(|(&n, c)| n as f64 * c[ch])
                    .sum::<f64>()
                    * inv;
            }
        }
    }
    Tensor::new(camera.shape().to_vec(), data)
}

fn shade(track: &Track, p: [f64; 2], segments: &[usize], hw: f64) -> usize {
    let Some(proj) = track.project_among(p, segments.iter().copied()) else {
        return GRASS;
    };
    let d = proj.distance;
    if d > hw {
        GRASS
    } else if d >= hw - EDGE_WIDTH_M {
        EDGE
    } else if d <= DASH_HALF_WIDTH_M
        && proj.along - DASH_PERIOD_M * floor(proj.along / DASH_PERIOD_M) < DASH_PERIOD_M / 2.0
    {
        DASH
    } else {
        ROAD
    }
}
