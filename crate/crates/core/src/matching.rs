//! Sparse landmark matching between pairs of shapes and dense maps built
//! from it.
//!
//! Landmarks are chosen by geodesic farthest-point sampling. Pairs are
//! matched either through mutual soft-correspondence balls or by stable
//! matching of scalar-field extrema, then refined greedily under the joint
//! farthest-point energy and interpolated to a dense map.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::Serialize;

use crate::collection::{CorrespondenceMap, GeodesicOracle, NeighborGraph, Point, Shape, ShapeCollection};
use crate::error::{Error, Result};
use crate::soft::{ball_mass, SoftCorrespondence};
use crate::spatial::PointIndex;

pub const DEFAULT_MAX_MATCHES: usize = 15;
pub const DEFAULT_INTERPOLATION_NEIGHBORS: usize = 4;
pub const DEFAULT_ICP_ITERATIONS: usize = 50;
/// Ball mass required on both sides of a partial match.
pub const MATCH_MASS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkMethod {
    Fps,
    Provided,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LandmarkSet {
    pub shape_id: String,
    pub vertices: Vec<usize>,
    pub method: LandmarkMethod,
}

impl LandmarkSet {
    pub fn provided(shape: &Shape) -> Self {
        LandmarkSet { shape_id: shape.id.clone(), vertices: shape.landmarks.clone(), method: LandmarkMethod::Provided }
    }
}

/// Geodesic farthest-point sampling of `n` vertices starting at `start`;
/// ties go to the lowest index.
pub fn fps_landmarks(shape: &Shape, n: usize, start: usize, oracle: &GeodesicOracle) -> Result<LandmarkSet> {
    oracle.ensure_shape(&shape.id)?;
    let len = shape.len();
    if n == 0 || n > len {
        return Err(Error::InvalidParameter(format!("cannot pick {n} landmarks from {len} points")));
    }
    if start >= len {
        return Err(Error::IndexOutOfRange { context: "landmark start".into(), index: start, len });
    }
    let mut chosen = vec![false; len];
    let mut vertices = vec![start];
    chosen[start] = true;
    let mut nearest = oracle.row(start).to_vec();
    while vertices.len() < n {
        let mut best: Option<usize> = None;
        for v in (0..len).filter(|&v| !chosen[v]) {
            if best.is_none_or(|b| nearest[v] > nearest[b]) {
                best = Some(v);
            }
        }
        let v = best.expect("fewer landmarks than points");
        chosen[v] = true;
        vertices.push(v);
        for (m, d) in nearest.iter_mut().zip(oracle.row(v)) {
            *m = m.min(*d);
        }
    }
    Ok(LandmarkSet { shape_id: shape.id.clone(), vertices, method: LandmarkMethod::Fps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Curvature,
    Partial,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Curvature => "curvature",
            Provenance::Partial => "partial",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Match {
    pub source: usize,
    pub target: usize,
    pub provenance: Provenance,
}

/// Landmark pairs between two shapes. `unmatched` lists source landmarks
/// for which no partner was found.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MatchList {
    pub matches: Vec<Match>,
    pub unmatched: Vec<usize>,
}

impl MatchList {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.matches.iter().map(|m| (m.source, m.target)).collect()
    }

    /// The same pairs seen from the other shape.
    pub fn reversed(&self) -> MatchList {
        let matches = self
            .matches
            .iter()
            .map(|m| Match { source: m.target, target: m.source, provenance: m.provenance })
            .collect();
        MatchList { matches, unmatched: Vec::new() }
    }
}

fn check_separation(landmarks: &[usize], radius: f64, oracle: &GeodesicOracle) -> Result<()> {
    for (k, &a) in landmarks.iter().enumerate() {
        let row = oracle.row(a);
        for &b in &landmarks[k + 1..] {
            if row[b] <= 2.0 * radius {
                return Err(Error::BallOverlap {
                    shape: oracle.shape_id().into(),
                    a,
                    b,
                    distance: row[b],
                    radius,
                });
            }
        }
    }
    Ok(())
}

fn soft_row(soft: &SoftCorrespondence, v: usize) -> Result<&crate::collection::Distribution> {
    soft.row(v).ok_or_else(|| Error::InvalidParameter(format!("soft correspondence {}->{} has no row for vertex {v}", soft.source_id, soft.target_id)))
}

/// Mutual-ball partial matching.
///
/// Landmark `a` on the first shape matches `b` on the second when the forward
/// soft row of `a` puts at least half its mass within `radius` of `b` and the
/// reverse row of `b` puts at least half within `radius` of `a`. The first
/// qualifying `b` in landmark order wins; a `b` is never used twice.
pub fn gp_partial_match(
    soft_12: &SoftCorrespondence,
    soft_21: &SoftCorrespondence,
    landmarks_1: &LandmarkSet,
    landmarks_2: &LandmarkSet,
    radius: f64,
    oracle_1: &GeodesicOracle,
    oracle_2: &GeodesicOracle,
) -> Result<MatchList> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be nonnegative, got {radius}")));
    }
    oracle_1.ensure_shape(&landmarks_1.shape_id)?;
    oracle_2.ensure_shape(&landmarks_2.shape_id)?;
    oracle_2.ensure_shape(&soft_12.target_id)?;
    oracle_1.ensure_shape(&soft_21.target_id)?;
    check_separation(&landmarks_1.vertices, radius, oracle_1)?;
    check_separation(&landmarks_2.vertices, radius, oracle_2)?;

    let mut used = vec![false; landmarks_2.vertices.len()];
    let mut out = MatchList::default();
    for &a in &landmarks_1.vertices {
        let forward = soft_row(soft_12, a)?;
        let mut found = None;
        for (k, &b) in landmarks_2.vertices.iter().enumerate() {
            if used[k] || ball_mass(forward, b, radius, oracle_2) < MATCH_MASS {
                continue;
            }
            if ball_mass(soft_row(soft_21, b)?, a, radius, oracle_1) >= MATCH_MASS {
                found = Some(k);
                break;
            }
        }
        match found {
            Some(k) => {
                used[k] = true;
                out.matches.push(Match { source: a, target: landmarks_2.vertices[k], provenance: Provenance::Partial });
            }
            None => out.unmatched.push(a),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExtremaSet {
    pub shape_id: String,
    pub vertices: Vec<usize>,
}

/// Vertices whose field value strictly exceeds every vertex within `hops`
/// graph edges, ascending.
pub fn detect_extrema(graph: &NeighborGraph, field: &[f64], hops: usize) -> Result<Vec<usize>> {
    if field.len() != graph.len() {
        return Err(Error::InvalidParameter(format!(
            "scalar field has {} values for {} vertices",
            field.len(),
            graph.len()
        )));
    }
    Ok((0..graph.len())
        .filter(|&v| graph.within_hops(v, hops).iter().all(|&u| field[v] > field[u]))
        .collect())
}

/// Strict local maxima of the shape's scalar field.
pub fn shape_extrema(shape: &Shape, oracle: &GeodesicOracle, hops: usize) -> Result<ExtremaSet> {
    oracle.ensure_shape(&shape.id)?;
    let field = shape
        .scalar_field
        .as_ref()
        .ok_or_else(|| Error::MissingField(shape.id.clone()))?;
    Ok(ExtremaSet { shape_id: shape.id.clone(), vertices: detect_extrema(oracle.graph(), field, hops)? })
}

/// Candidate pair `(a, b)` with the two projected geodesic distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureCandidate {
    pub source: usize,
    pub target: usize,
    /// Distance on the target shape from the projection of `source` to `target`.
    pub forward: f64,
    /// Distance on the source shape from the projection of `target` to `source`.
    pub backward: f64,
}

/// Mutual candidates: the nearest-vertex projection of each extremum lies
/// within geodesic `delta` of the other extremum, measured on the shape
/// receiving the projection.
pub fn curvature_candidates(
    shape_i: &Shape,
    shape_j: &Shape,
    extrema_i: &ExtremaSet,
    extrema_j: &ExtremaSet,
    delta: f64,
    oracle_i: &GeodesicOracle,
    oracle_j: &GeodesicOracle,
) -> Result<Vec<CurvatureCandidate>> {
    oracle_i.ensure_shape(&shape_i.id)?;
    oracle_j.ensure_shape(&shape_j.id)?;
    let index_i = PointIndex::new(&shape_i.points);
    let index_j = PointIndex::new(&shape_j.points);
    let proj_i: Vec<usize> = extrema_i.vertices.iter().map(|&a| index_j.nearest(&shape_i.points[a]).0).collect();
    let proj_j: Vec<usize> = extrema_j.vertices.iter().map(|&b| index_i.nearest(&shape_j.points[b]).0).collect();
    let mut out = Vec::new();
    for (&a, &pa) in extrema_i.vertices.iter().zip(&proj_i) {
        for (&b, &pb) in extrema_j.vertices.iter().zip(&proj_j) {
            let forward = oracle_j.distance(pa, b);
            let backward = oracle_i.distance(pb, a);
            if forward < delta && backward < delta {
                out.push(CurvatureCandidate { source: a, target: b, forward, backward });
            }
        }
    }
    Ok(out)
}

/// Gale-Shapley over the candidate pairs with sources proposing. Sources
/// rank by `forward`, targets by `backward`; ties go to the lower index.
pub fn stable_matching(candidates: &[CurvatureCandidate]) -> MatchList {
    let mut prefs: BTreeMap<usize, Vec<&CurvatureCandidate>> = BTreeMap::new();
    for c in candidates {
        prefs.entry(c.source).or_default().push(c);
    }
    for list in prefs.values_mut() {
        list.sort_by(|x, y| x.forward.total_cmp(&y.forward).then(x.target.cmp(&y.target)));
    }
    let rank = |c: &CurvatureCandidate| (c.backward, c.source);
    let mut next = BTreeMap::<usize, usize>::new();
    let mut engaged: BTreeMap<usize, &CurvatureCandidate> = BTreeMap::new();
    let mut free: Vec<usize> = prefs.keys().rev().copied().collect();
    while let Some(a) = free.pop() {
        let k = next.entry(a).or_insert(0);
        let Some(&c) = prefs[&a].get(*k) else { continue };
        *k += 1;
        match engaged.get(&c.target) {
            None => {
                engaged.insert(c.target, c);
            }
            Some(&cur) => {
                let (rc, rn) = (rank(cur), rank(c));
                if rn.0 < rc.0 || (rn.0 == rc.0 && rn.1 < rc.1) {
                    engaged.insert(c.target, c);
                    free.push(cur.source);
                } else {
                    free.push(a);
                }
            }
        }
    }
    let mut matches: Vec<Match> = engaged
        .values()
        .map(|c| Match { source: c.source, target: c.target, provenance: Provenance::Curvature })
        .collect();
    matches.sort();
    let matched: Vec<usize> = matches.iter().map(|m| m.source).collect();
    let unmatched = prefs.keys().filter(|a| !matched.contains(a)).copied().collect();
    MatchList { matches, unmatched }
}

/// Curvature matches between two pre-aligned shapes.
pub fn stable_curvature_match(
    shape_i: &Shape,
    shape_j: &Shape,
    extrema_i: &ExtremaSet,
    extrema_j: &ExtremaSet,
    delta: f64,
    oracle_i: &GeodesicOracle,
    oracle_j: &GeodesicOracle,
) -> Result<MatchList> {
    let candidates = curvature_candidates(shape_i, shape_j, extrema_i, extrema_j, delta, oracle_i, oracle_j)?;
    Ok(stable_matching(&candidates))
}

/// Greedy joint farthest-point refinement.
///
/// Starts from `seed` and repeatedly adds the candidate maximizing the sum of
/// its geodesic distances to the current set on both shapes; ties go to the
/// lowest source index. Candidates sharing a vertex with the current set are
/// skipped.
pub fn joint_fps_refine(
    seed: &MatchList,
    candidates: &MatchList,
    max_matches: usize,
    oracle_i: &GeodesicOracle,
    oracle_j: &GeodesicOracle,
) -> Result<MatchList> {
    if max_matches < seed.len() {
        return Err(Error::InvalidParameter(format!(
            "max_matches = {max_matches} is below the {} seed matches",
            seed.len()
        )));
    }
    let mut chosen = seed.matches.clone();
    let mut pool: Vec<Match> = candidates.matches.clone();
    pool.sort();
    pool.dedup();
    let mut near_i = vec![f64::INFINITY; pool.len()];
    let mut near_j = vec![f64::INFINITY; pool.len()];
    for m in &chosen {
        absorb(m, &pool, &mut near_i, &mut near_j, oracle_i, oracle_j);
    }
    while chosen.len() < max_matches {
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in pool.iter().enumerate() {
            if chosen.iter().any(|m| m.source == c.source || m.target == c.target) {
                continue;
            }
            let energy = near_i[k] + near_j[k];
            if best.is_none_or(|(_, e)| energy > e) {
                best = Some((k, energy));
            }
        }
        let Some((k, _)) = best else { break };
        let m = pool[k];
        absorb(&m, &pool, &mut near_i, &mut near_j, oracle_i, oracle_j);
        chosen.push(m);
    }
    Ok(MatchList { matches: chosen, unmatched: Vec::new() })
}

fn absorb(
    m: &Match,
    pool: &[Match],
    near_i: &mut [f64],
    near_j: &mut [f64],
    oracle_i: &GeodesicOracle,
    oracle_j: &GeodesicOracle,
) {
    let (ri, rj) = (oracle_i.row(m.source), oracle_j.row(m.target));
    for (k, c) in pool.iter().enumerate() {
        near_i[k] = near_i[k].min(ri[c.source]);
        near_j[k] = near_j[k].min(rj[c.target]);
    }
}

/// Dense map from sparse matches.
///
/// Every source vertex takes the inverse-geodesic-distance weighted mean of
/// the target positions of its `k` geodesically nearest matched landmarks,
/// snapped to the nearest target vertex. Matched landmarks map to their own
/// targets.
pub fn interpolate_dense(
    matches: &MatchList,
    shape_i: &Shape,
    shape_j: &Shape,
    oracle_i: &GeodesicOracle,
    k: usize,
) -> Result<CorrespondenceMap> {
    oracle_i.ensure_shape(&shape_i.id)?;
    if matches.is_empty() {
        return Err(Error::NoMatches);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("interpolation needs at least one neighbor".into()));
    }
    let mut anchors: Vec<(usize, usize)> = matches.pairs();
    anchors.sort_unstable();
    anchors.dedup_by_key(|a| a.0);
    for &(s, t) in &anchors {
        if s >= shape_i.len() || t >= shape_j.len() {
            return Err(Error::InvalidParameter(format!("match ({s}, {t}) out of range")));
        }
    }
    let rows: Vec<&[f64]> = anchors.iter().map(|&(s, _)| oracle_i.row(s)).collect();
    let index = PointIndex::new(&shape_j.points);
    let k = k.min(anchors.len());
    let mut images = Vec::with_capacity(shape_i.len());
    for v in 0..shape_i.len() {
        let mut near: Vec<(f64, usize)> = rows.iter().enumerate().map(|(a, row)| (row[v], a)).collect();
        near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if near[0].0 == 0.0 {
            // a matched landmark or a vertex coinciding with one
            images.push(anchors[near[0].1].1);
            continue;
        }
        let mut acc = Vector3::zeros();
        let mut total = 0.0;
        for &(d, a) in &near[..k] {
            let w = 1.0 / d;
            acc += shape_j.points[anchors[a].1].coords * w;
            total += w;
        }
        images.push(index.nearest(&Point::from(acc / total)).0);
    }
    CorrespondenceMap::discrete(&shape_i.id, &shape_j.id, shape_j.len(), images)
}

/// Rigid alignment of one cloud onto another.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Nearest target vertex of each aligned source vertex.
    pub forward: CorrespondenceMap,
    /// Nearest source vertex of each target vertex under the inverse motion.
    pub backward: CorrespondenceMap,
    /// Root mean square of the matched distances in both directions.
    pub distance: f64,
    pub iterations: usize,
}

impl Alignment {
    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.rotation * p.coords + self.translation)
    }
}

fn centroid(points: &[Point]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / points.len() as f64
}

fn check_nondegenerate(shape: &Shape) -> Result<()> {
    if shape.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("shape {} has fewer than 3 points", shape.id)));
    }
    let c = centroid(&shape.points);
    let mut cov = Matrix3::zeros();
    for p in &shape.points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let sv = cov.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[1] > 1e-12 * sv[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateGeometry(format!("shape {} is collinear", shape.id)));
    }
    Ok(())
}

/// Least-squares rotation and translation taking `src` onto `dst`.
pub fn kabsch(src: &[Point], dst: &[Point]) -> (Matrix3<f64>, Vector3<f64>) {
    let (cs, cd) = (centroid(src), centroid(dst));
    let mut h = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        h += (p.coords - cs) * (q.coords - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    (r, cd - r * cs)
}

/// Iterative closest point from a centroid-matched start, for a fixed
/// iteration budget (stopping early once the assignment is stable).
pub fn baseline_pairwise_align(source: &Shape, target: &Shape, iterations: usize) -> Result<Alignment> {
    check_nondegenerate(source)?;
    check_nondegenerate(target)?;
    let tree = PointIndex::new(&target.points);
    let mut rotation = Matrix3::identity();
    let mut translation = centroid(&target.points) - centroid(&source.points);
    let mut assignment: Vec<usize> = Vec::new();
    let mut used = 0;
    for it in 0..iterations {
        let (next, sq): (Vec<usize>, f64) = nearest_all(&source.points, &tree, &rotation, &translation);
        used = it + 1;
        if next == assignment || sq == 0.0 {
            break;
        }
        assignment = next;
        let matched: Vec<Point> = assignment.iter().map(|&t| target.points[t]).collect();
        (rotation, translation) = kabsch(&source.points, &matched);
    }
    let (forward, sq_f) = nearest_all(&source.points, &tree, &rotation, &translation);
    let inv_r = rotation.transpose();
    let inv_t = -(inv_r * translation);
    let (backward, sq_b) = nearest_all(&target.points, &PointIndex::new(&source.points), &inv_r, &inv_t);
    let distance = ((sq_f + sq_b) / (source.len() + target.len()) as f64).sqrt();
    Ok(Alignment {
        rotation,
        translation,
        forward: CorrespondenceMap::discrete(&source.id, &target.id, target.len(), forward)?,
        backward: CorrespondenceMap::discrete(&target.id, &source.id, source.len(), backward)?,
        distance,
        iterations: used,
    })
}

fn nearest_all(points: &[Point], tree: &PointIndex, r: &Matrix3<f64>, t: &Vector3<f64>) -> (Vec<usize>, f64) {
    let mut sq = 0.0;
    let idx = points
        .iter()
        .map(|p| {
            let (k, d) = tree.nearest(&Point::from(r * p.coords + t));
            sq += d * d;
            k
        })
        .collect();
    (idx, sq)
}

/// Rotation by `angle` about `axis`, for tests and synthetic data.
pub fn rotation(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

/// Maps routed through the Fréchet-mean shape `mean`.
#[derive(Clone, Debug)]
pub struct ConsistentTable {
    pub mean: usize,
    /// `f_{j<-i} = f_{j<-M} ∘ f_{M<-i}` keyed by `(i, j)`.
    pub maps: BTreeMap<(usize, usize), CorrespondenceMap>,
    /// Each shape's vertices expressed as vertices of the mean shape
    /// (`f_{M<-i}`, the identity for the mean itself).
    pub to_mean: Vec<CorrespondenceMap>,
}

impl ConsistentTable {
    /// Number of source vertices where `f_{k<-j} ∘ f_{j<-i}` and `f_{k<-i}`
    /// disagree.
    pub fn cycle_violations(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        if i == j || j == k || i == k {
            return Ok(0);
        }
        let lhs = crate::collection::compose_maps(&self.maps[&(j, k)], &self.maps[&(i, j)])?;
        let (a, b) = (lhs.as_discrete(), self.maps[&(i, k)].as_discrete());
        Ok(match (a, b) {
            (Some(a), Some(b)) => a.iter().zip(b).filter(|(x, y)| x != y).count(),
            _ => usize::from(lhs != self.maps[&(i, k)]),
        })
    }
}

/// Composes every pair through the Fréchet-mean shape of the collection.
pub fn consistent_via_mean(
    collection: &ShapeCollection,
    table: &BTreeMap<(usize, usize), CorrespondenceMap>,
) -> Result<ConsistentTable> {
    let n = collection.len();
    let mean = collection.graph().frechet_mean_index();
    let get = |from: usize, to: usize| -> Result<CorrespondenceMap> {
        if from == to {
            let s = collection.shape(from);
            return Ok(CorrespondenceMap::identity(&s.id, s.len()));
        }
        table.get(&(from, to)).cloned().ok_or_else(|| Error::MissingMap {
            from: collection.shape(from).id.clone(),
            to: collection.shape(to).id.clone(),
        })
    };
    let to_mean: Vec<CorrespondenceMap> = (0..n).map(|i| get(i, mean)).collect::<Result<_>>()?;
    let from_mean: Vec<CorrespondenceMap> = (0..n).map(|j| get(mean, j)).collect::<Result<_>>()?;
    let mut maps = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let composed = crate::collection::compose_maps(&from_mean[j], &to_mean[i])?;
                maps.insert((i, j), composed);
            }
        }
    }
    Ok(ConsistentTable { mean, maps, to_mean })
}
