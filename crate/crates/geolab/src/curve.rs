//! The enhanced eyes-on-the-prize condition for sampled curves on the sphere.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sphere::{check_not_antipodal, check_unit, Vec3, UNIT_TOLERANCE};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EopCheck {
    pub pass: bool,
    /// Smallest inner product minus `epsilon`.
    pub margin: f64,
    pub min_away: f64,
    pub min_toward: f64,
    /// The curve is a graph over the `x`-`y` geodesic.
    pub monotone_longitude: bool,
    /// Samples at `x` or `y`, where the directions are undefined.
    pub skipped: Vec<usize>,
}

/// Unit direction at `s` of the geodesic toward `p`, or `None` when `p == s`.
fn direction(s: &Vec3, p: &Vec3) -> Option<Vec3> {
    let w = p - p.dot(s) * s;
    (w.norm() > UNIT_TOLERANCE).then(|| w.normalize())
}

/// Checks `g(s', v_{x,s}) > ε` and `g(s', v_{s,y}) > ε` at every sample.
///
/// `v_{x,s}` is the velocity at `s` of the unit-speed geodesic from `x`,
/// `v_{s,y}` the initial velocity at `s` of the geodesic to `y`; both live in
/// the tangent plane at `s`. Tangents come from central differences.
pub fn enhanced_eop_check(curve: &[Vec3], x: Vec3, y: Vec3, epsilon: f64) -> Result<EopCheck> {
    if curve.len() < 2 {
        return Err(Error::InvalidParameter("a curve needs at least two samples".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    check_unit(&x)?;
    check_unit(&y)?;
    check_not_antipodal(&x, &y)?;
    for s in curve {
        check_unit(s)?;
        check_not_antipodal(s, &x)?;
        check_not_antipodal(s, &y)?;
    }
    let last = curve.len() - 1;
    let (mut min_away, mut min_toward) = (f64::INFINITY, f64::INFINITY);
    let mut skipped = Vec::new();
    for (k, s) in curve.iter().enumerate() {
        let (Some(from_x), Some(to_y)) = (direction(s, &x), direction(s, &y)) else {
            skipped.push(k);
            continue;
        };
        let diff = curve[(k + 1).min(last)] - curve[k.saturating_sub(1)];
        let Some(tangent) = direction(s, &(s + diff)) else {
            skipped.push(k);
            continue;
        };
        min_away = min_away.min(-tangent.dot(&from_x));
        min_toward = min_toward.min(tangent.dot(&to_y));
    }
    let margin = min_away.min(min_toward) - epsilon;
    let e1 = x;
    let e3 = x.cross(&y).normalize();
    let e2 = e3.cross(&e1);
    let lon: Vec<f64> = curve.iter().map(|s| s.dot(&e2).atan2(s.dot(&e1))).collect();
    let monotone_longitude = lon.windows(2).all(|w| w[1] > w[0]);
    Ok(EopCheck {
        pass: margin.is_finite() && margin > 0.0,
        margin,
        min_away,
        min_toward,
        monotone_longitude,
        skipped,
    })
}

/// Point at longitude `lon` and latitude `lat` in the frame where the
/// `x`-`y` geodesic runs along the equator from longitude 0.
fn frame_point(x: &Vec3, y: &Vec3, lon: f64, lat: f64) -> Vec3 {
    let e3 = x.cross(y).normalize();
    let e2 = e3.cross(x);
    lat.cos() * (lon.cos() * x + lon.sin() * e2) + lat.sin() * e3
}

/// `n` samples of the geodesic from `x` to `y`.
pub fn geodesic_samples(x: Vec3, y: Vec3, n: usize) -> Vec<Vec3> {
    perturbed_geodesic(x, y, 0.0, 0, n)
}

/// Geodesic from `x` to `y` with latitude `amplitude · sin(waves π t)`.
pub fn perturbed_geodesic(x: Vec3, y: Vec3, amplitude: f64, waves: u32, n: usize) -> Vec<Vec3> {
    let theta = x.cross(&y).norm().atan2(x.dot(&y));
    (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            frame_point(&x, &y, t * theta, amplitude * (waves as f64 * std::f64::consts::PI * t).sin())
        })
        .collect()
}

/// Resamples a polyline on the sphere to `n` points equally spaced in chord
/// length, projected back to the sphere.
pub fn resample_unit_speed(curve: &[Vec3], n: usize) -> Vec<Vec3> {
    if curve.len() < 2 || n < 2 {
        return curve.to_vec();
    }
    let mut cum = vec![0.0];
    for w in curve.windows(2) {
        cum.push(cum[cum.len() - 1] + (w[1] - w[0]).norm());
    }
    let total = cum[cum.len() - 1];
    (0..n)
        .map(|k| {
            let target = total * k as f64 / (n - 1) as f64;
            let seg = cum.partition_point(|&c| c <= target).clamp(1, curve.len() - 1);
            let len = cum[seg] - cum[seg - 1];
            let u = if len > 0.0 { (target - cum[seg - 1]) / len } else { 0.0 };
            (curve[seg - 1] * (1.0 - u) + curve[seg] * u).normalize()
        })
        .collect()
}
