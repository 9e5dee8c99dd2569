//! Parallel transport along great-circle paths on the unit sphere.

use std::fmt::Write as _;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub const UNIT_TOLERANCE: f64 = 1e-12;
/// Gaussian curvature of the unit sphere.
pub const K_MAX: f64 = 1.0;
pub const DEFAULT_RK4_STEPS: usize = 2000;

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub(crate) fn check_unit(p: &Vec3) -> Result<()> {
    if (p.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NonUnit(arr(p)));
    }
    Ok(())
}

/// Fails when `a` and `b` are (numerically) antipodal.
pub(crate) fn check_not_antipodal(a: &Vec3, b: &Vec3) -> Result<()> {
    if a.cross(b).norm() <= UNIT_TOLERANCE && a.dot(b) < 0.0 {
        return Err(Error::Antipodal(arr(a), arr(b)));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Vec3,
    pub vector: Vec3,
}

impl TangentVector {
    pub fn new(base: Vec3, vector: Vec3) -> Result<Self> {
        check_unit(&base)?;
        let ip = base.dot(&vector);
        if ip.abs() > UNIT_TOLERANCE * vector.norm().max(1.0) {
            return Err(Error::NotTangent(ip));
        }
        Ok(TangentVector { base, vector })
    }

    pub fn norm(&self) -> f64 {
        self.vector.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicLeg {
    pub from: Vec3,
    pub to: Vec3,
}

impl GeodesicLeg {
    pub fn new(from: Vec3, to: Vec3) -> Result<Self> {
        check_unit(&from)?;
        check_unit(&to)?;
        check_not_antipodal(&from, &to)?;
        Ok(GeodesicLeg { from, to })
    }

    pub fn length(&self) -> f64 {
        self.from.cross(&self.to).norm().atan2(self.from.dot(&self.to))
    }

    /// Rotation about the great-circle axis carrying `from` to `to`.
    pub fn rotation(&self) -> Rotation3<f64> {
        let axis = self.from.cross(&self.to);
        if axis.norm() <= UNIT_TOLERANCE {
            return Rotation3::identity();
        }
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), self.length())
    }

    /// Unit initial direction at `from`, if the leg has positive length.
    pub fn direction(&self) -> Option<Vec3> {
        let u = self.to - self.from.dot(&self.to) * self.from;
        (u.norm() > UNIT_TOLERANCE).then(|| u.normalize())
    }
}

/// Chain of great-circle legs, each starting where the previous one ends.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicLegPath {
    legs: Vec<GeodesicLeg>,
}

impl GeodesicLegPath {
    pub fn from_legs(legs: Vec<GeodesicLeg>) -> Result<Self> {
        if legs.is_empty() {
            return Err(Error::InvalidParameter("a path needs at least one leg".into()));
        }
        for k in 1..legs.len() {
            if (legs[k - 1].to - legs[k].from).norm() > UNIT_TOLERANCE {
                return Err(Error::LegsDoNotChain(k - 1, k));
            }
        }
        Ok(GeodesicLegPath { legs })
    }

    /// Legs between consecutive points.
    pub fn through(points: &[Vec3]) -> Result<Self> {
        let legs = points.windows(2).map(|w| GeodesicLeg::new(w[0], w[1])).collect::<Result<_>>()?;
        Self::from_legs(legs)
    }

    pub fn legs(&self) -> &[GeodesicLeg] {
        &self.legs
    }

    pub fn start(&self) -> Vec3 {
        self.legs[0].from
    }

    pub fn end(&self) -> Vec3 {
        self.legs[self.legs.len() - 1].to
    }

    fn check_start(&self, v: &TangentVector) -> Result<()> {
        if (v.base - self.start()).norm() > UNIT_TOLERANCE {
            return Err(Error::InvalidParameter("tangent vector is not based at the path start".into()));
        }
        Ok(())
    }
}

/// Closed-form transport: one rotation per leg.
pub fn transport_along_path(path: &GeodesicLegPath, v: &TangentVector) -> Result<TangentVector> {
    path.check_start(v)?;
    let vector = path.legs.iter().fold(v.vector, |acc, leg| leg.rotation() * acc);
    Ok(TangentVector { base: path.end(), vector })
}

/// Transport by fourth-order integration of `V' = -(V·γ')γ` with
/// `steps_per_leg` fixed steps on each leg.
pub fn transport_integrated(path: &GeodesicLegPath, v: &TangentVector, steps_per_leg: usize) -> Result<TangentVector> {
    path.check_start(v)?;
    if steps_per_leg == 0 {
        return Err(Error::InvalidParameter("need at least one integration step".into()));
    }
    let mut x = v.vector;
    for leg in &path.legs {
        let Some(u) = leg.direction() else { continue };
        let a = leg.from;
        let theta = leg.length();
        let h = theta / steps_per_leg as f64;
        let f = |t: f64, x: &Vec3| {
            let (s, c) = t.sin_cos();
            let g = c * a + s * u;
            let dg = -s * a + c * u;
            -x.dot(&dg) * g
        };
        for k in 0..steps_per_leg {
            let t = k as f64 * h;
            let k1 = f(t, &x);
            let k2 = f(t + h / 2.0, &(x + h / 2.0 * k1));
            let k3 = f(t + h / 2.0, &(x + h / 2.0 * k2));
            let k4 = f(t + h, &(x + h * k3));
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    Ok(TangentVector { base: path.end(), vector: x })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereTriangle {
    pub p: Vec3,
    pub q: Vec3,
    pub r: Vec3,
}

impl SphereTriangle {
    pub fn new(p: Vec3, q: Vec3, r: Vec3) -> Result<Self> {
        for x in [&p, &q, &r] {
            check_unit(x)?;
        }
        check_not_antipodal(&p, &q)?;
        check_not_antipodal(&q, &r)?;
        check_not_antipodal(&p, &r)?;
        Ok(SphereTriangle { p, q, r })
    }

    /// Spherical excess.
    pub fn area(&self) -> f64 {
        let (p, q, r) = (&self.p, &self.q, &self.r);
        let num = p.dot(&q.cross(r)).abs();
        let den = 1.0 + p.dot(q) + q.dot(r) + r.dot(p);
        2.0 * num.atan2(den)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Holonomy {
    pub deficit: f64,
    pub deficit_integrated: f64,
    pub area: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Gap between transporting `v` from `p` to `r` via `q` and directly. The
/// bound `(4/3) K_max A ‖v‖` uses the triangle's area as the homotopy area.
pub fn holonomy_deficit(tri: &SphereTriangle, v: &TangentVector, steps_per_leg: usize) -> Result<Holonomy> {
    let two = GeodesicLegPath::through(&[tri.p, tri.q, tri.r])?;
    let one = GeodesicLegPath::through(&[tri.p, tri.r])?;
    let deficit = (transport_along_path(&two, v)?.vector - transport_along_path(&one, v)?.vector).norm();
    let deficit_integrated =
        (transport_integrated(&two, v, steps_per_leg)?.vector - transport_integrated(&one, v, steps_per_leg)?.vector).norm();
    let area = tri.area();
    let bound = 4.0 / 3.0 * K_MAX * area * v.norm();
    Ok(Holonomy { deficit, deficit_integrated, area, bound, satisfied: deficit <= bound })
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random unit tangent vector at `base`.
pub fn random_tangent<R: Rng>(base: Vec3, rng: &mut R) -> TangentVector {
    loop {
        let w = random_unit(rng);
        let t = w - w.dot(&base) * base;
        if t.norm() > 1e-3 {
            let t = t.normalize();
            let t = t - t.dot(&base) * base;
            return TangentVector { base, vector: t };
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolonomyTrial {
    pub trial: usize,
    #[serde(flatten)]
    pub holonomy: Holonomy,
}

/// Seeded random triangles with random unit tangent vectors at `p`.
pub fn holonomy_trials(count: usize, seed: u64, steps_per_leg: usize) -> Result<Vec<HolonomyTrial>> {
    (0..count)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let tri = loop {
                let (p, q, r) = (random_unit(&mut rng), random_unit(&mut rng), random_unit(&mut rng));
                if [(p, q), (q, r), (p, r)].iter().all(|(a, b)| (a + b).norm() > 1e-3) {
                    break SphereTriangle::new(p, q, r)?;
                }
            };
            let v = random_tangent(tri.p, &mut rng);
            Ok(HolonomyTrial { trial, holonomy: holonomy_deficit(&tri, &v, steps_per_leg)? })
        })
        .collect()
}

/// Rows `trial,area,deficit,deficit_integrated,bound,satisfied`.
pub fn trials_csv(trials: &[HolonomyTrial]) -> String {
    let mut out = String::from("trial,area,deficit,deficit_integrated,bound,satisfied\n");
    for t in trials {
        let h = &t.holonomy;
        let _ = writeln!(out, "{},{},{},{},{},{}", t.trial, h.area, h.deficit, h.deficit_integrated, h.bound, h.satisfied);
    }
    out
}
