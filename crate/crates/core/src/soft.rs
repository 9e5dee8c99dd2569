//! Gibbs measures over admissible paths and the soft correspondences they
//! induce, with hard-map extraction.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::collection::{CorrespondenceMap, Distribution, GeodesicOracle, ShapeCollection};
use crate::error::{Error, Result};
use crate::flow::{directed_flow_matrix, enumerate_paths, PathOptions, PathRecord};

/// Paths of one ordered pair with probabilities `p ∝ exp(-beta E)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathDistribution {
    pub source: usize,
    pub target: usize,
    pub lambda: f64,
    pub beta: f64,
    pub paths: Vec<PathRecord>,
    pub probabilities: Vec<f64>,
}

impl PathDistribution {
    /// Normalizes the weights of `paths`. Energies are shifted by their
    /// minimum first so that long paths never underflow the partition sum.
    pub fn new(source: usize, target: usize, lambda: f64, beta: f64, paths: Vec<PathRecord>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyPathSet { from: source, to: target });
        }
        let e_min = paths.iter().map(|p| p.energy).fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = paths.iter().map(|p| (-beta * (p.energy - e_min)).exp()).collect();
        let z: f64 = raw.iter().sum();
        let probabilities = raw.into_iter().map(|r| r / z).collect();
        Ok(PathDistribution { source, target, lambda, beta, paths, probabilities })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PathRecord, f64)> {
        self.paths.iter().zip(self.probabilities.iter().copied())
    }
}

/// Path distribution of `(i, j)` over the collection's flow graph.
pub fn path_distribution(collection: &ShapeCollection, i: usize, j: usize, options: &PathOptions) -> Result<PathDistribution> {
    let flow = directed_flow_matrix(collection.graph(), i, j)?;
    let paths = enumerate_paths(&flow, options)?;
    PathDistribution::new(i, j, options.lambda, collection.graph().beta(), paths)
}

/// Per-vertex distributions over the target shape.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftCorrespondence {
    pub source_id: String,
    pub target_id: String,
    pub target_len: usize,
    pub lambda: f64,
    pub beta: f64,
    pub path_count: usize,
    /// `(source vertex, distribution)` in query order.
    pub rows: Vec<(usize, Distribution)>,
}

impl SoftCorrespondence {
    pub fn row(&self, vertex: usize) -> Option<&Distribution> {
        self.rows.iter().find(|(v, _)| *v == vertex).map(|(_, d)| d)
    }
}

/// Pushes each queried source vertex through every admissible path's
/// composed map and sums the path probabilities per target vertex.
pub fn propagate_soft(
    collection: &ShapeCollection,
    i: usize,
    j: usize,
    options: &PathOptions,
    query: &[usize],
) -> Result<SoftCorrespondence> {
    let paths = path_distribution(collection, i, j, options)?;
    propagate_with_paths(collection, &paths, query)
}

pub fn propagate_with_paths(
    collection: &ShapeCollection,
    paths: &PathDistribution,
    query: &[usize],
) -> Result<SoftCorrespondence> {
    let (i, j) = (paths.source, paths.target);
    let n_src = collection.shape(i).len();
    if let Some(&v) = query.iter().find(|&&v| v >= n_src) {
        return Err(Error::IndexOutOfRange { context: format!("query on {}", collection.shape(i).id), index: v, len: n_src });
    }
    let mut masses: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); query.len()];
    for (path, p) in paths.iter() {
        for (acc, &v) in masses.iter_mut().zip(query) {
            let image = collection.push_along(&path.vertices, &Distribution::delta(v))?;
            for &(t, m) in image.entries() {
                *acc.entry(t).or_insert(0.0) += p * m;
            }
        }
    }
    let rows = query
        .iter()
        .zip(masses)
        .map(|(&v, acc)| (v, Distribution::from_masses(acc).normalized()))
        .collect();
    Ok(SoftCorrespondence {
        source_id: collection.shape(i).id.clone(),
        target_id: collection.shape(j).id.clone(),
        target_len: collection.shape(j).len(),
        lambda: paths.lambda,
        beta: paths.beta,
        path_count: paths.len(),
        rows,
    })
}

/// Hard correspondences for a subset of source vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HardMap {
    pub source_id: String,
    pub target_id: String,
    pub target_len: usize,
    /// `(source vertex, target vertex)` in query order.
    pub pairs: Vec<(usize, usize)>,
}

impl HardMap {
    pub fn get(&self, vertex: usize) -> Option<usize> {
        self.pairs.iter().find(|(v, _)| *v == vertex).map(|&(_, t)| t)
    }

    /// Hard map of a discrete map on `vertices`.
    pub fn from_map(map: &CorrespondenceMap, vertices: &[usize]) -> Result<Self> {
        let images = map.as_discrete().ok_or_else(|| Error::InvalidMap {
            map: map.label(),
            reason: "expected a discrete map".into(),
        })?;
        let pairs = vertices
            .iter()
            .map(|&v| {
                images.get(v).map(|&t| (v, t)).ok_or_else(|| Error::IndexOutOfRange {
                    context: format!("source of {}", map.label()),
                    index: v,
                    len: images.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(HardMap {
            source_id: map.source_id().into(),
            target_id: map.target_id().into(),
            target_len: map.target_len(),
            pairs,
        })
    }

    /// Full discrete map; every source vertex must be covered exactly once.
    pub fn into_map(self, source_len: usize) -> Result<CorrespondenceMap> {
        let mut images = vec![None; source_len];
        for (v, t) in self.pairs {
            if v >= source_len {
                return Err(Error::IndexOutOfRange { context: "hard map source".into(), index: v, len: source_len });
            }
            images[v] = Some(t);
        }
        let images = images
            .into_iter()
            .enumerate()
            .map(|(v, t)| {
                t.ok_or_else(|| Error::InvalidMap {
                    map: format!("{}->{}", self.source_id, self.target_id),
                    reason: format!("no image for vertex {v}"),
                })
            })
            .collect::<Result<_>>()?;
        CorrespondenceMap::discrete(self.source_id, self.target_id, self.target_len, images)
    }
}

/// Most likely target per row; ties go to the lowest index.
pub fn mle(soft: &SoftCorrespondence) -> Result<HardMap> {
    let pairs = soft
        .rows
        .iter()
        .map(|(v, row)| {
            let mut best: Option<(usize, f64)> = None;
            for &(t, m) in row.entries() {
                if best.is_none_or(|(_, bm)| m > bm) {
                    best = Some((t, m));
                }
            }
            best.map(|(t, _)| (*v, t)).ok_or(Error::EmptyRow(*v))
        })
        .collect::<Result<_>>()?;
    Ok(hard(soft, pairs))
}

/// Per row, the support point minimizing the expected squared geodesic
/// distance to the row; ties go to the lowest index.
pub fn frechet_mean(soft: &SoftCorrespondence, oracle: &GeodesicOracle) -> Result<HardMap> {
    oracle.ensure_shape(&soft.target_id)?;
    let pairs = soft
        .rows
        .iter()
        .map(|(v, row)| frechet_point(row, oracle).map(|t| (*v, t)).ok_or(Error::EmptyRow(*v)))
        .collect::<Result<_>>()?;
    Ok(hard(soft, pairs))
}

/// Support-restricted Fréchet mean of one distribution.
pub fn frechet_point(row: &Distribution, oracle: &GeodesicOracle) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for x in row.support() {
        let dist = oracle.row(x);
        let cost: f64 = row.entries().iter().map(|&(q, m)| m * dist[q] * dist[q]).sum();
        if best.is_none_or(|(_, bc)| cost < bc) {
            best = Some((x, cost));
        }
    }
    best.map(|(x, _)| x)
}

fn hard(soft: &SoftCorrespondence, pairs: Vec<(usize, usize)>) -> HardMap {
    HardMap {
        source_id: soft.source_id.clone(),
        target_id: soft.target_id.clone(),
        target_len: soft.target_len,
        pairs,
    }
}

/// Mass of `row` within geodesic distance `radius` of `center`.
pub fn ball_mass(row: &Distribution, center: usize, radius: f64, oracle: &GeodesicOracle) -> f64 {
    let dist = oracle.row(center);
    row.entries().iter().filter(|&&(q, _)| dist[q] <= radius).map(|&(_, m)| m).sum()
}

/// Which source vertices to query on each shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum QuerySet {
    #[default]
    Landmarks,
    All,
    /// One vertex list per shape.
    Explicit(Vec<Vec<usize>>),
}

impl QuerySet {
    pub fn vertices(&self, collection: &ShapeCollection, shape: usize) -> Vec<usize> {
        match self {
            QuerySet::Landmarks => collection.shape(shape).landmarks.clone(),
            QuerySet::All => (0..collection.shape(shape).len()).collect(),
            QuerySet::Explicit(lists) => lists[shape].clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairResult {
    pub source: usize,
    pub target: usize,
    pub soft: SoftCorrespondence,
    pub mle: HardMap,
    pub frechet: HardMap,
}

/// Soft correspondences and both hard maps for every ordered pair, computed
/// in parallel and returned in `(source, target)` order.
pub fn all_pairs_soft(
    collection: &ShapeCollection,
    options: &PathOptions,
    query: &QuerySet,
    oracles: &[GeodesicOracle],
) -> Result<Vec<PairResult>> {
    let n = collection.len();
    if oracles.len() != n {
        return Err(Error::InvalidParameter(format!("{} geodesic oracles for {n} shapes", oracles.len())));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    pairs
        .into_par_iter()
        .map(|(i, j)| {
            let run = || -> Result<PairResult> {
                let soft = propagate_soft(collection, i, j, options, &query.vertices(collection, i))?;
                let mle = mle(&soft)?;
                let frechet = frechet_mean(&soft, &oracles[j])?;
                Ok(PairResult { source: i, target: j, soft, mle, frechet })
            };
            run().map_err(|e| e.in_pair(i, j))
        })
        .collect()
}
