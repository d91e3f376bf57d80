//! Scalar helpers shared across modules.

use alloc::vec::Vec;

use crate::{Error, Result};

pub use libm::{atan, atan2, cos, exp, fabs, floor, log, round, sin, sqrt, tan};

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = core::f64::consts::TAU;

pub fn deg_to_rad(deg: f64) -> f64 {
    deg * (PI / 180.0)
}

pub fn rad_to_deg(rad: f64) -> f64 {
    rad * (180.0 / PI)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a - TAU * floor((a + PI) / TAU);
    if r <= -PI {
        r += TAU;
    }
    r
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut out = Vec::with_capacity(logits.len());
    softmax_into(logits, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(logits.iter().map(|&z| exp(z - max)));
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
}

/// Mean computed around the first element: `x0 + sum(x - x0) / n`.
///
/// Returns `x0` bit-exactly when all inputs are equal.
pub fn shifted_mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = xs.clone();
    let Some(x0) = it.next() else {
        return f64::NAN;
    };
    let mut n = 1usize;
    let mut acc = 0.0;
    for x in it {
        acc += x - x0;
        n += 1;
    }
    x0 + acc / n as f64
}

/// `x ln x` with `0 ln 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * log(x)
    } else {
        0.0
    }
}

/// Entropy in nats of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlogx(v)).sum::<f64>()
}

/// Index of the largest element; lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
