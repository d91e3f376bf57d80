use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::SimState;
use crate::math::{atan2, cos, floor, sin, sqrt, PI};
use crate::{Error, Result};

/// On-disk form of a track: `{name, half_width, centerline: [[x, y], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackDef {
    pub name: String,
    pub half_width: f64,
    pub centerline: Vec<[f64; 2]>,
}

/// Closest point on the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub segment: usize,
    /// Arc length of the closest point from the first vertex.
    pub along: f64,
    /// Unsigned distance to the centerline.
    pub distance: f64,
    /// Signed lateral offset, positive to the right of the driving direction.
    pub offset: f64,
    pub point: [f64; 2],
    /// Direction of the segment, radians.
    pub road_heading: f64,
}

/// Closed road: a polyline centerline driven in vertex order, with a half width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrackDef", into = "TrackDef")]
pub struct Track {
    name: String,
    half_width: f64,
    points: Vec<[f64; 2]>,
    /// `cum[i]` is the arc length at vertex `i`; `cum[n]` is the loop length.
    cum: Vec<f64>,
}

impl TryFrom<TrackDef> for Track {
    type Error = Error;

    fn try_from(d: TrackDef) -> Result<Self> {
        Track::new(d.name, d.half_width, d.centerline)
    }
}

impl From<Track> for TrackDef {
    fn from(t: Track) -> Self {
        TrackDef {
            name: t.name,
            half_width: t.half_width,
            centerline: t.points,
        }
    }
}

/// Bundled track layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackPreset {
    /// 120 m straights joined by 35 m-radius half circles.
    Oval,
    /// Pinched loop `r = 55 (1 + 0.35 cos 2phi)`; left turns at the lobes,
    /// right turns through the waist. The centerline does not cross itself.
    Figure8,
    /// 300 m straight, 30 m half circles and a return leg with four
    /// 24 m bumps (radius of curvature down to about 12 m).
    Serpentine,
}

impl TrackPreset {
    pub const ALL: [TrackPreset; 3] = [TrackPreset::Oval, TrackPreset::Figure8, TrackPreset::Serpentine];

    pub fn name(self) -> &'static str {
        match self {
            TrackPreset::Oval => "oval",
            TrackPreset::Figure8 => "figure8",
            TrackPreset::Serpentine => "serpentine",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn build(self) -> Track {
        let hw = 4.0;
        let mut pts = Vec::new();
        match self {
            TrackPreset::Oval => {
                let (len, r) = (120.0, 35.0);
                straight(&mut pts, [0.0, -r], [len, -r], 2.0);
                arc(&mut pts, [len, 0.0], r, -PI / 2.0, PI / 2.0, 2.0);
                straight(&mut pts, [len, r], [0.0, r], 2.0);
                arc(&mut pts, [0.0, 0.0], r, PI / 2.0, 3.0 * PI / 2.0, 2.0);
            }
            TrackPreset::Figure8 => {
                let n = 240;
                for i in 0..n {
                    let phi = -PI / 2.0 + 2.0 * PI * i as f64 / n as f64;
                    let r = 55.0 * (1.0 + 0.35 * cos(2.0 * phi));
                    pts.push([r * cos(phi), r * sin(phi)]);
                }
            }
            TrackPreset::Serpentine => {
                let (len, r) = (300.0, 30.0);
                straight(&mut pts, [0.0, 0.0], [len, 0.0], 2.0);
                arc(&mut pts, [len, r], r, -PI / 2.0, PI / 2.0, 2.0);
                let n = 200;
                for i in 0..n {
                    let x = len * (1.0 - i as f64 / n as f64);
                    let y = 2.0 * r + 12.0 * (1.0 - cos(2.0 * PI * 4.0 * x / len));
                    pts.push([x, y]);
                }
                arc(&mut pts, [0.0, r], r, PI / 2.0, 3.0 * PI / 2.0, 2.0);
            }
        }
        Track::new(self.name().into(), hw, pts).expect("bundled track is valid")
    }
}

fn straight(pts: &mut Vec<[f64; 2]>, a: [f64; 2], b: [f64; 2], spacing: f64) {
    let len = sqrt((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]));
    let n = (len / spacing) as usize;
    for i in 0..n {
        let t = i as f64 / n as f64;
        pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
}

fn arc(pts: &mut Vec<[f64; 2]>, c: [f64; 2], r: f64, from: f64, to: f64, spacing: f64) {
    let n = (r * (to - from).abs() / spacing) as usize;
    for i in 0..n {
        let a = from + (to - from) * i as f64 / n as f64;
        pts.push([c[0] + r * cos(a), c[1] + r * sin(a)]);
    }
}

impl Track {
    /// Validates and builds a track. A repeated closing vertex is dropped.
    ///
    /// Rejects centerlines whose road surface would overlap itself: any two
    /// segments more than `8 * half_width` apart along the loop must be more
    /// than `2 * half_width` apart in the plane.
    pub fn new(name: String, half_width: f64, mut points: Vec<[f64; 2]>) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "track half width {half_width} must be positive"
            )));
        }
        if points.len() >= 2 && points.first() == points.last() {
            points.pop();
        }
        if points.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "track needs at least 3 distinct points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("track centerline"));
        }
        let n = points.len();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let l = seg_len(&points, i);
            if l == 0.0 {
                return Err(Error::InvalidArgument(format!("track has a repeated vertex at {i}")));
            }
            cum.push(cum[i] + l);
        }
        let track = Self {
            name,
            half_width,
            points,
            cum,
        };
        track.check_self_overlap()?;
        Ok(track)
    }

    fn check_self_overlap(&self) -> Result<()> {
        let n = self.points.len();
        let total = self.length();
        let min_sep = 8.0 * self.half_width;
        for i in 0..n {
            for j in i + 1..n {
                let d = self.cum[j] - self.cum[i] - seg_len(&self.points, i);
                let around = total - (self.cum[j] - self.cum[i]) - seg_len(&self.points, j);
                if d.min(around) <= min_sep {
                    continue;
                }
                let dist = segment_distance(
                    self.points[i],
                    self.points[(i + 1) % n],
                    self.points[j],
                    self.points[(j + 1) % n],
                );
                if dist <= 2.0 * self.half_width {
                    return Err(Error::InvalidArgument(format!(
                        "track '{}' overlaps itself near segments {i} and {j}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.cum[self.points.len()]
    }

    pub fn segment_count(&self) -> usize {
        self.points.len()
    }

    /// Reflection across the x axis, driven in the same vertex order.
    pub fn mirrored(&self) -> Self {
        Self {
            name: self.name.clone(),
            half_width: self.half_width,
            points: self.points.iter().map(|&[x, y]| [x, -y]).collect(),
            cum: self.cum.clone(),
        }
    }

    /// Car at the first vertex, facing along the first segment.
    pub fn start_state(&self, speed: f64) -> SimState {
        let [x, y] = self.points[0];
        SimState {
            x,
            y,
            heading: self.heading_at(0.0),
            speed,
            steering: 0.0,
            t: 0.0,
            frame: 0,
        }
    }

    fn wrap_s(&self, s: f64) -> f64 {
        let l = self.length();
        s - l * floor(s / l)
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let s = self.wrap_s(s);
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 1),
            Err(i) => i - 1,
        };
        (i, s - self.cum[i])
    }

    /// Centerline point at arc length `s` (wrapped around the loop).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let (i, rem) = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        let t = rem / seg_len(&self.points, i);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Direction of the centerline at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, _) = self.segment_at(s);
        self.segment_heading(i)
    }

    fn segment_heading(&self, i: usize) -> f64 {
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        atan2(b[1] - a[1], b[0] - a[0])
    }

    /// Nearest centerline point over all segments.
    pub fn project(&self, p: [f64; 2]) -> Projection {
        self.project_among(p, 0..self.points.len())
            .expect("track has segments")
    }

    /// Nearest point among a subset of segments; the first of equally near segments wins.
    pub fn project_among(&self, p: [f64; 2], segments: impl IntoIterator<Item = usize>) -> Option<Projection> {
        let n = self.points.len();
        let mut best: Option<(f64, usize, f64, [f64; 2])> = None;
        for i in segments {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            let (d2, t, c) = closest_on_segment(p, a, b);
            if best.is_none_or(|(bd, ..)| d2 < bd) {
                best = Some((d2, i, t, c));
            }
        }
        let (d2, i, t, c) = best?;
        let a = self.points[i];
        let b = self.points[(i + 1) % n];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let distance = sqrt(d2);
        Some(Projection {
            segment: i,
            along: self.cum[i] + t * (self.cum[i + 1] - self.cum[i]),
            distance,
            offset: if cross > 0.0 { -distance } else { distance },
            point: c,
            road_heading: self.segment_heading(i),
        })
    }

    /// Segments with at least one point within `radius` of `center`.
    pub fn segments_near(&self, center: [f64; 2], radius: f64) -> Vec<usize> {
        let n = self.points.len();
        (0..n)
            .filter(|&i| {
                let (d2, ..) = closest_on_segment(center, self.points[i], self.points[(i + 1) % n]);
                d2 <= radius * radius
            })
            .collect()
    }

    /// Signed change in arc length from `from` to `to`, taking the shorter way around.
    pub fn progress(&self, from: f64, to: f64) -> f64 {
        let l = self.length();
        let mut d = to - from;
        if d > l / 2.0 {
            d -= l;
        } else if d < -l / 2.0 {
            d += l;
        }
        d
    }
}

fn seg_len(points: &[[f64; 2]], i: usize) -> f64 {
    let a = points[i];
    let b = points[(i + 1) % points.len()];
    sqrt((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]))
}

/// `(squared distance, parameter, closest point)` from `p` to segment `ab`.
fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64, [f64; 2]) {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    let c = [a[0] + t * dx, a[1] + t * dy];
    let ex = p[0] - c[0];
    let ey = p[1] - c[1];
    (ex * ex + ey * ey, t, c)
}

fn segment_distance(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return 0.0;
    }
    let m = closest_on_segment(a, c, d)
        .0
        .min(closest_on_segment(b, c, d).0)
        .min(closest_on_segment(c, a, b).0)
        .min(closest_on_segment(d, a, b).0);
    sqrt(m)
}
