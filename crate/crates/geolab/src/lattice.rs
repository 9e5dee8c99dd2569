//! Random walks between two vertices of a square lattice with horizontal,
//! vertical and diagonal neighbors.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use corrsync_core::flow::{sample_walk_with, FlowMatrix, WalkStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_SIDE: usize = 31;
pub const DEFAULT_BETA: f64 = 1.0;
/// EOP attempts allowed per requested walk before giving up.
pub const DISCARD_BUDGET: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGraph {
    side: usize,
    coords: Vec<[f64; 2]>,
    neighbors: Vec<Vec<usize>>,
}

impl LatticeGraph {
    /// `side × side` equispaced vertices on the unit square, indexed row by
    /// row from `(0, 0)`.
    pub fn new(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidParameter(format!("lattice side must be at least 2, got {side}")));
        }
        let h = 1.0 / (side - 1) as f64;
        let mut coords = Vec::with_capacity(side * side);
        let mut neighbors = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                coords.push([c as f64 * h, r as f64 * h]);
                let mut nb = Vec::with_capacity(8);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if (dr, dc) != (0, 0) && (0..side as i64).contains(&rr) && (0..side as i64).contains(&cc) {
                            nb.push(rr as usize * side + cc as usize);
                        }
                    }
                }
                neighbors.push(nb);
            }
        }
        Ok(LatticeGraph { side, coords, neighbors })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.side + col
    }

    pub fn coords(&self, v: usize) -> [f64; 2] {
        self.coords[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.coords[a], self.coords[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }

    /// Distance from `v` to the segment between `a` and `b`.
    pub fn segment_distance(&self, v: usize, a: usize, b: usize) -> f64 {
        let (p, s, t) = (self.coords[v], self.coords[a], self.coords[b]);
        let (dx, dy) = (t[0] - s[0], t[1] - s[1]);
        let len2 = dx * dx + dy * dy;
        let u = if len2 == 0.0 { 0.0 } else { (((p[0] - s[0]) * dx + (p[1] - s[1]) * dy) / len2).clamp(0.0, 1.0) };
        (p[0] - s[0] - u * dx).hypot(p[1] - s[1] - u * dy)
    }

    /// Flow graph between `source` and `target` over lattice edges with
    /// Euclidean distances.
    pub fn flow(&self, source: usize, target: usize, beta: f64) -> Result<FlowMatrix> {
        Ok(FlowMatrix::from_metric(
            self.len(),
            source,
            target,
            beta,
            |a, b| self.distance(a, b),
            |m| self.neighbors[m].iter().copied(),
        )?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkMode {
    Standard,
    Nonbacktracking,
    #[default]
    Eop,
}

impl fmt::Display for WalkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WalkMode::Standard => "standard",
            WalkMode::Nonbacktracking => "nonbacktracking",
            WalkMode::Eop => "eop",
        })
    }
}

impl FromStr for WalkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(WalkMode::Standard),
            "nonbacktracking" => Ok(WalkMode::Nonbacktracking),
            "eop" => Ok(WalkMode::Eop),
            _ => Err(Error::InvalidParameter(format!("unknown walk mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeWalk {
    pub id: usize,
    pub trajectory: Vec<usize>,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkStats {
    pub mode: WalkMode,
    pub reached: usize,
    pub discarded: usize,
    pub max_deviation: f64,
    pub mean_max_deviation: f64,
    pub mean_steps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkSet {
    pub source: usize,
    pub target: usize,
    pub walks: Vec<LatticeWalk>,
    pub stats: WalkStats,
}

fn walk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform_walk(
    lattice: &LatticeGraph,
    source: usize,
    target: usize,
    backtrack: bool,
    id: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<usize>> {
    let mut rng = walk_rng(seed, id as u64);
    let mut trajectory = vec![source];
    let (mut prev, mut v) = (usize::MAX, source);
    while v != target {
        if trajectory.len() > max_steps {
            return Err(Error::MaxSteps { walk: id, max_steps });
        }
        let nb = lattice.neighbors(v);
        let next = if backtrack {
            nb[rng.random_range(0..nb.len())]
        } else {
            let allowed: Vec<usize> = nb.iter().copied().filter(|&u| u != prev).collect();
            allowed[rng.random_range(0..allowed.len())]
        };
        prev = v;
        v = next;
        trajectory.push(v);
    }
    Ok(trajectory)
}

/// `count` seeded walks from `source` to `target`. Walk `k` draws from its
/// own random stream, so results do not depend on scheduling. EOP walks that
/// stop at a sink other than the target are discarded and resampled.
pub fn lattice_walks(
    lattice: &LatticeGraph,
    mode: WalkMode,
    source: usize,
    target: usize,
    count: usize,
    seed: u64,
    max_steps: usize,
) -> Result<WalkSet> {
    let n = lattice.len();
    if source >= n || target >= n {
        return Err(Error::InvalidParameter(format!("walk endpoints must be below {n}")));
    }
    if source == target {
        return Err(Error::InvalidParameter("source and target coincide".into()));
    }
    let (trajectories, discarded) = match mode {
        WalkMode::Standard | WalkMode::Nonbacktracking => {
            let backtrack = mode == WalkMode::Standard;
            let t = (0..count)
                .into_par_iter()
                .map(|id| uniform_walk(lattice, source, target, backtrack, id, seed, max_steps))
                .collect::<Result<Vec<_>>>()?;
            (t, 0)
        }
        WalkMode::Eop => {
            let flow = lattice.flow(source, target, DEFAULT_BETA)?;
            let mut kept = Vec::with_capacity(count);
            let mut discarded = 0;
            let budget = count.saturating_mul(DISCARD_BUDGET);
            let mut attempt = 0;
            while kept.len() < count {
                if attempt >= budget {
                    return Err(Error::TooManyDiscards { requested: count, reached: kept.len(), attempts: attempt });
                }
                let walk = sample_walk_with(&flow, &mut walk_rng(seed, attempt as u64), max_steps)?;
                attempt += 1;
                match walk.status {
                    WalkStatus::Reached => kept.push(walk.trajectory),
                    WalkStatus::Discarded => discarded += 1,
                }
            }
            (kept, discarded)
        }
    };
    let walks: Vec<LatticeWalk> = trajectories
        .into_iter()
        .enumerate()
        .map(|(id, trajectory)| {
            let max_deviation = trajectory
                .iter()
                .map(|&v| lattice.segment_distance(v, source, target))
                .fold(0.0, f64::max);
            LatticeWalk { id, trajectory, max_deviation }
        })
        .collect();
    let k = walks.len().max(1) as f64;
    let stats = WalkStats {
        mode,
        reached: walks.len(),
        discarded,
        max_deviation: walks.iter().map(|w| w.max_deviation).fold(0.0, f64::max),
        mean_max_deviation: walks.iter().map(|w| w.max_deviation).sum::<f64>() / k,
        mean_steps: walks.iter().map(|w| (w.trajectory.len() - 1) as f64).sum::<f64>() / k,
    };
    Ok(WalkSet { source, target, walks, stats })
}

/// True when the distance to `target` strictly decreases along the walk.
pub fn strictly_approaches(lattice: &LatticeGraph, trajectory: &[usize], target: usize) -> bool {
    trajectory
        .windows(2)
        .all(|w| lattice.distance(w[1], target) < lattice.distance(w[0], target))
}

/// True when some step immediately returns to the previous vertex.
pub fn has_reversal(trajectory: &[usize]) -> bool {
    trajectory.windows(3).any(|w| w[0] == w[2])
}

impl WalkSet {
    /// Rows `walk_id,step,x,y`.
    pub fn to_csv(&self, lattice: &LatticeGraph) -> String {
        let mut out = String::from("walk_id,step,x,y\n");
        for w in &self.walks {
            for (step, &v) in w.trajectory.iter().enumerate() {
                let [x, y] = lattice.coords(v);
                let _ = writeln!(out, "{},{},{},{}", w.id, step, x, y);
            }
        }
        out
    }

    /// Rows `walk_id,steps,max_deviation`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("walk_id,steps,max_deviation\n");
        for w in &self.walks {
            let _ = writeln!(out, "{},{},{}", w.id, w.trajectory.len() - 1, w.max_deviation);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degrees() {
        let l = LatticeGraph::new(DEFAULT_SIDE).unwrap();
        assert_eq!(l.len(), 961);
        assert_eq!(l.neighbors(0).len(), 3);
        assert_eq!(l.neighbors(l.index(0, 30)).len(), 3);
        assert_eq!(l.neighbors(l.index(0, 5)).len(), 5);
        assert_eq!(l.neighbors(l.index(15, 15)).len(), 8);
        for v in 0..l.len() {
            for &u in l.neighbors(v) {
                assert!(l.neighbors(u).contains(&v));
            }
        }
        assert_eq!(l.coords(960), [1.0, 1.0]);
        assert!(LatticeGraph::new(1).is_err());
    }

    #[test]
    fn eop_flow_is_acyclic() {
        let l = LatticeGraph::new(11).unwrap();
        for (s, t) in [(0, 120), (5, 115), (60, 0), (3, 4)] {
            let f = l.flow(s, t, 1.0).unwrap();
            assert!(f.topological_order().is_some());
        }
    }

    #[test]
    fn walk_modes() {
        let l = LatticeGraph::new(9).unwrap();
        let (s, t) = (0, l.len() - 1);
        let nb = lattice_walks(&l, WalkMode::Nonbacktracking, s, t, 20, 5, 1_000_000).unwrap();
        assert!(nb.walks.iter().all(|w| !has_reversal(&w.trajectory)));
        let st = lattice_walks(&l, WalkMode::Standard, s, t, 20, 5, 1_000_000).unwrap();
        assert!(st.walks.iter().all(|w| *w.trajectory.last().unwrap() == t));
        let eop = lattice_walks(&l, WalkMode::Eop, s, t, 20, 5, 1000).unwrap();
        assert_eq!(eop.stats.reached, 20);
        assert!(eop.walks.iter().all(|w| strictly_approaches(&l, &w.trajectory, t)));
        assert!(eop.stats.mean_steps <= 16.0);
        assert!(matches!(
            lattice_walks(&l, WalkMode::Standard, s, t, 1, 5, 3),
            Err(Error::MaxSteps { walk: 0, max_steps: 3 })
        ));
        assert!(lattice_walks(&l, WalkMode::Eop, s, s, 1, 5, 10).is_err());
    }

    #[test]
    fn eop_walks_from_the_middle_can_be_discarded() {
        // walks toward an edge vertex from the center may stall on the border
        let l = LatticeGraph::new(9).unwrap();
        let set = lattice_walks(&l, WalkMode::Eop, l.index(4, 4), l.index(0, 1), 50, 1, 1000).unwrap();
        assert_eq!(set.stats.reached, 50);
        assert!(set.stats.discarded > 0);
        assert!(set.walks.iter().all(|w| strictly_approaches(&l, &w.trajectory, l.index(0, 1))));
    }

    #[test]
    fn reproducible() {
        let l = LatticeGraph::new(7).unwrap();
        let a = lattice_walks(&l, WalkMode::Eop, 0, 48, 10, 7, 100).unwrap();
        let b = lattice_walks(&l, WalkMode::Eop, 0, 48, 10, 7, 100).unwrap();
        assert_eq!(a.to_csv(&l), b.to_csv(&l));
        assert_ne!(a.to_csv(&l), lattice_walks(&l, WalkMode::Eop, 0, 48, 10, 8, 100).unwrap().to_csv(&l));
    }
}
