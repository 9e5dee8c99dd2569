//! Landmark-error benchmarks, synthetic collections with controlled
//! corruption, and stability reports under shape insertion or removal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{default_epsilon, direct_propagate, mst_propagate, shortest_path_propagate, EdgeCost, TreeStructure};
use crate::collection::{
    compose_maps, intra_metric, CorrespondenceMap, GeodesicOracle, Point, Shape, ShapeCollection, SyncGraph,
    DEFAULT_BETA, DEFAULT_NEIGHBORS,
};
use crate::error::{Error, Result};
use crate::flow::{directed_flow_matrix, PathOptions};
use crate::matching::{baseline_pairwise_align, fps_landmarks, DEFAULT_ICP_ITERATIONS};
use crate::soft::{frechet_mean, mle, propagate_soft, HardMap};

pub const DEFAULT_GRID_POINTS: usize = 100;
pub const DEFAULT_GRID_MAX: f64 = 0.5;

/// `points` evenly spaced thresholds from 0 to `max` inclusive.
pub fn grid(points: usize, max: f64) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|k| max * k as f64 / (points - 1) as f64).collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    grid(DEFAULT_GRID_POINTS, DEFAULT_GRID_MAX)
}

/// Fraction of landmarks with error at most each threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub method: Method,
    pub lambda: Option<f64>,
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    pub mean_error: f64,
    pub samples: usize,
}

impl ErrorCurve {
    /// Area under the curve divided by the grid range.
    pub fn auc(&self) -> f64 {
        let t = &self.thresholds;
        if t.len() < 2 {
            return self.fractions.first().copied().unwrap_or(0.0);
        }
        let area: f64 = (1..t.len())
            .map(|k| 0.5 * (self.fractions[k] + self.fractions[k - 1]) * (t[k] - t[k - 1]))
            .sum();
        area / (t[t.len() - 1] - t[0])
    }
}

/// Cumulative fractions of `errors` on `grid`.
pub fn error_cdf(errors: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::InvalidParameter("no landmark errors to summarize".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / n)
        .collect())
}

/// Geodesic error on the target shape of `predicted` at every ground-truth
/// label shared by both shapes, in label order. With `normalize` the errors
/// are divided by the target's geodesic diameter.
pub fn landmark_errors(
    predicted: &HardMap,
    source: &Shape,
    target: &Shape,
    oracle: &GeodesicOracle,
    normalize: bool,
) -> Result<Vec<f64>> {
    oracle.ensure_shape(&target.id)?;
    let scale = if normalize { oracle.diameter() } else { 1.0 };
    let mut out = Vec::new();
    for (label, &v) in &source.ground_truth {
        let Some(&truth) = target.ground_truth.get(label) else { continue };
        let guess = predicted.get(v).ok_or_else(|| {
            Error::InvalidParameter(format!("no prediction for landmark {label} (vertex {v}) of {}", source.id))
        })?;
        out.push(oracle.distance(guess, truth) / scale);
    }
    if out.is_empty() {
        return Err(Error::NoSharedLabels(source.id.clone(), target.id.clone()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Mst,
    Shortest,
    Frechet,
    Mle,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Direct, Method::Mst, Method::Shortest, Method::Frechet, Method::Mle];

    pub fn uses_lambda(self) -> bool {
        matches!(self, Method::Frechet | Method::Mle)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Direct => "direct",
            Method::Mst => "mst",
            Method::Shortest => "shortest",
            Method::Frechet => "frechet",
            Method::Mle => "mle",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub lambdas: Vec<f64>,
    /// Only evaluate pairs `(i, mean)` with the Fréchet-mean shape.
    pub to_mean: bool,
    pub grid: Vec<f64>,
    pub normalize: bool,
    /// Pruning radius for shortest paths; `None` picks the smallest
    /// connecting value.
    pub epsilon: Option<f64>,
    pub edge_cost: EdgeCost,
    pub max_paths: usize,
    pub strict: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            methods: Method::ALL.to_vec(),
            lambdas: vec![crate::flow::DEFAULT_LAMBDA],
            to_mean: false,
            grid: default_grid(),
            normalize: true,
            epsilon: None,
            edge_cost: EdgeCost::default(),
            max_paths: crate::flow::DEFAULT_MAX_PATHS,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub curves: Vec<ErrorCurve>,
    pub pairs: Vec<(usize, usize)>,
    pub mean_shape: Option<usize>,
    pub epsilon: f64,
}

impl BenchmarkReport {
    pub fn curve(&self, method: Method, lambda: Option<f64>) -> Option<&ErrorCurve> {
        self.curves.iter().find(|c| c.method == method && c.lambda == lambda)
    }

    /// Rows `method,lambda,threshold,fraction`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,lambda,threshold,fraction\n");
        for c in &self.curves {
            let lambda = c.lambda.map(|l| l.to_string()).unwrap_or_default();
            for (t, f) in c.thresholds.iter().zip(&c.fractions) {
                let _ = writeln!(out, "{},{},{},{}", c.method, lambda, t, f);
            }
        }
        out
    }

    /// Polyline plot of every curve.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const PAD: f64 = 40.0;
        const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
        let t_max = self
            .curves
            .iter()
            .flat_map(|c| c.thresholds.last().copied())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for (k, c) in self.curves.iter().enumerate() {
            let pts: Vec<String> = c
                .thresholds
                .iter()
                .zip(&c.fractions)
                .map(|(t, f)| {
                    let x = PAD + (W - 2.0 * PAD) * t / t_max;
                    let y = H - PAD - (H - 2.0 * PAD) * f;
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let color = COLORS[k % COLORS.len()];
            let label = match c.lambda {
                Some(l) => format!("{} ({l})", c.method),
                None => c.method.to_string(),
            };
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, pts.join(" "));
            let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{label}</text>"#, W - PAD - 120.0, PAD + 16.0 * (k + 1) as f64);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}">error</text>"#, W / 2.0, H - 10.0);
        let _ = writeln!(s, r#"<text x="4" y="{}">fraction</text>"#, H / 2.0);
        s.push_str("</svg>\n");
        s
    }
}

/// Evaluates every configured method over all ordered pairs (or pairs into
/// the Fréchet-mean shape) and pools the landmark errors per method and
/// threshold.
pub fn run_benchmark(
    collection: &ShapeCollection,
    config: &BenchmarkConfig,
    oracles: &[GeodesicOracle],
) -> Result<BenchmarkReport> {
    let n = collection.len();
    if oracles.len() != n {
        return Err(Error::InvalidParameter(format!("{} geodesic oracles for {n} shapes", oracles.len())));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    let mean_shape = config.to_mean.then(|| collection.graph().frechet_mean_index());
    let pairs: Vec<(usize, usize)> = match mean_shape {
        Some(m) => (0..n).filter(|&i| i != m).map(|i| (i, m)).collect(),
        None => (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect(),
    };
    let epsilon = config.epsilon.unwrap_or_else(|| default_epsilon(collection.graph()));
    let tree = TreeStructure::kruskal(collection.graph());

    // one slot per (method, lambda) in output order
    let mut slots: Vec<(Method, Option<f64>)> = Vec::new();
    for &m in &config.methods {
        if m.uses_lambda() {
            slots.extend(config.lambdas.iter().map(|&l| (m, Some(l))));
        } else {
            slots.push((m, None));
        }
    }

    let per_pair: Vec<Vec<Vec<f64>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let run = || -> Result<Vec<Vec<f64>>> {
                let (src, tgt) = (collection.shape(i), collection.shape(j));
                let query: Vec<usize> = src.ground_truth.values().copied().collect();
                let errors = |h: &HardMap| landmark_errors(h, src, tgt, &oracles[j], config.normalize);
                let mut soft_cache: BTreeMap<u64, (HardMap, HardMap)> = BTreeMap::new();
                let mut out = Vec::with_capacity(slots.len());
                for &(method, lambda) in &slots {
                    let hard = match method {
                        Method::Direct => HardMap::from_map(&direct_propagate(collection, i, j)?, &query)?,
                        Method::Mst => HardMap::from_map(&mst_propagate(collection, &tree, i, j)?.0, &query)?,
                        Method::Shortest => HardMap::from_map(
                            &shortest_path_propagate(collection, i, j, epsilon, config.edge_cost)?.0,
                            &query,
                        )?,
                        Method::Frechet | Method::Mle => {
                            let lambda = lambda.expect("lambda slot");
                            if let std::collections::btree_map::Entry::Vacant(slot) = soft_cache.entry(lambda.to_bits()) {
                                let options = PathOptions { lambda, max_paths: config.max_paths, strict: config.strict };
                                let soft = propagate_soft(collection, i, j, &options, &query)?;
                                slot.insert((mle(&soft)?, frechet_mean(&soft, &oracles[j])?));
                            }
                            let (m, f) = &soft_cache[&lambda.to_bits()];
                            if method == Method::Mle { m.clone() } else { f.clone() }
                        }
                    };
                    out.push(errors(&hard)?);
                }
                Ok(out)
            };
            run().map_err(|e| e.in_pair(i, j))
        })
        .collect::<Result<_>>()?;

    let mut curves = Vec::with_capacity(slots.len());
    for (k, &(method, lambda)) in slots.iter().enumerate() {
        let pooled: Vec<f64> = per_pair.iter().flat_map(|p| p[k].iter().copied()).collect();
        let fractions = error_cdf(&pooled, &config.grid)?;
        let mean_error = pooled.iter().sum::<f64>() / pooled.len() as f64;
        curves.push(ErrorCurve {
            method,
            lambda,
            thresholds: config.grid.clone(),
            fractions,
            mean_error,
            samples: pooled.len(),
        });
    }
    Ok(BenchmarkReport { curves, pairs, mean_shape, epsilon })
}

/// Geodesic oracles for every shape of a collection.
pub fn collection_oracles(collection: &ShapeCollection, k: usize) -> Result<Vec<GeodesicOracle>> {
    collection.shapes().par_iter().map(|s| intra_metric(s, k)).collect()
}

/// How the stored maps of a synthetic collection are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthMaps {
    /// Identity on the shared indexing (a consistent collection).
    GroundTruth,
    /// Nearest neighbors after rigid alignment.
    #[default]
    Aligned,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_shapes: usize,
    pub n_points: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub bumps: usize,
    pub bump_width: f64,
    pub landmarks: usize,
    pub maps: SynthMaps,
    pub icp_iterations: usize,
    pub beta: f64,
    pub allow_duplicates: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_shapes: 10,
            n_points: 500,
            amplitude: 0.1,
            seed: 0,
            bumps: 6,
            bump_width: 0.5,
            landmarks: 12,
            maps: SynthMaps::default(),
            icp_iterations: DEFAULT_ICP_ITERATIONS,
            beta: DEFAULT_BETA,
            allow_duplicates: false,
        }
    }
}

/// `n` near-uniform points on the unit sphere (Fibonacci lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<Point> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let theta = golden * k as f64;
            Point::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect()
}

fn random_unit<R: Rng>(rng: &mut R) -> nalgebra::Vector3<f64> {
    loop {
        let v = nalgebra::Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Deformed copies of a sphere sharing one vertex indexing, with
/// ground-truth labels on farthest-point landmarks of the base sphere.
pub fn synth_collection(config: &SynthConfig) -> Result<ShapeCollection> {
    if config.n_points < 16 {
        return Err(Error::InvalidParameter(format!("need at least 16 points, got {}", config.n_points)));
    }
    if config.n_shapes < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 shapes, got {}", config.n_shapes)));
    }
    if !(config.amplitude >= 0.0) || !(config.bump_width > 0.0) {
        return Err(Error::InvalidParameter("amplitude must be nonnegative and bump width positive".into()));
    }
    let base = fibonacci_sphere(config.n_points);
    let base_shape = Shape::new("base", base.clone());
    let base_oracle = intra_metric(&base_shape, DEFAULT_NEIGHBORS)?;
    let marks = fps_landmarks(&base_shape, config.landmarks.min(config.n_points), 0, &base_oracle)?.vertices;
    let labels: BTreeMap<String, usize> = marks.iter().enumerate().map(|(k, &v)| (format!("L{k}"), v)).collect();

    let width2 = 2.0 * config.bump_width * config.bump_width;
    let shapes: Vec<Shape> = (0..config.n_shapes)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(s as u64);
            let bumps: Vec<(nalgebra::Vector3<f64>, f64)> = (0..config.bumps)
                .map(|_| {
                    let c = random_unit(&mut rng);
                    let a = if config.amplitude > 0.0 { rng.random_range(-config.amplitude..=config.amplitude) } else { 0.0 };
                    (c, a)
                })
                .collect();
            let points = base
                .iter()
                .map(|p| {
                    let r = 1.0 + bumps.iter().map(|(c, a)| a * (-(p.coords - c).norm_squared() / width2).exp()).sum::<f64>();
                    Point::from(p.coords * r)
                })
                .collect();
            Shape::new(format!("s{s}"), points)
                .with_landmarks(marks.clone())
                .with_ground_truth(labels.clone())
        })
        .collect();

    let n = config.n_shapes;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
    let aligned = pairs
        .par_iter()
        .map(|&(a, b)| baseline_pairwise_align(&shapes[a], &shapes[b], config.icp_iterations))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = vec![vec![0.0; n]; n];
    let mut maps = Vec::with_capacity(n * (n - 1));
    for (&(a, b), al) in pairs.iter().zip(aligned) {
        rows[a][b] = al.distance;
        rows[b][a] = al.distance;
        match config.maps {
            SynthMaps::Aligned => {
                maps.push(al.forward);
                maps.push(al.backward);
            }
            SynthMaps::GroundTruth => {
                let len = config.n_points;
                maps.push(CorrespondenceMap::discrete(&shapes[a].id, &shapes[b].id, len, (0..len).collect())?);
                maps.push(CorrespondenceMap::discrete(&shapes[b].id, &shapes[a].id, len, (0..len).collect())?);
            }
        }
    }
    let graph = SyncGraph::new(rows, config.beta, config.allow_duplicates)?;
    ShapeCollection::new(shapes, graph, maps)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CorruptionLog {
    /// Unordered pairs `(a, b)`, `a < b`, whose maps were scrambled.
    pub pairs: Vec<(usize, usize)>,
    /// Number of target vertices permuted in each corrupted pair.
    pub permuted: Vec<usize>,
    pub seed: u64,
}

/// Scrambles the maps of a seeded `fraction` of unordered pairs.
///
/// For a chosen pair `(a, b)` a random cyclic permutation `σ` of a seeded
/// `subset` fraction of the vertices of `b` replaces `f_{b<-a}` by
/// `σ ∘ f_{b<-a}` and `f_{a<-b}` by `f_{a<-b} ∘ σ⁻¹`, so maps that were
/// mutually inverse stay so.
pub fn corrupt_maps(
    collection: &ShapeCollection,
    fraction: f64,
    subset: f64,
    seed: u64,
) -> Result<(ShapeCollection, CorruptionLog)> {
    if !(0.0..=1.0).contains(&fraction) || !(0.0..=1.0).contains(&subset) {
        return Err(Error::InvalidParameter("corruption fractions must lie in [0, 1]".into()));
    }
    let n = collection.len();
    let mut all: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    let count = (fraction * all.len() as f64).round() as usize;
    let mut chosen: Vec<(usize, usize)> = all[..count].to_vec();
    chosen.sort_unstable();

    let mut out = collection.clone();
    let mut log = CorruptionLog { pairs: chosen.clone(), permuted: Vec::new(), seed };
    for &(a, b) in &chosen {
        let len = collection.shape(b).len();
        let mut pair_rng = ChaCha8Rng::seed_from_u64(seed);
        pair_rng.set_stream((a * n + b) as u64 + 1);
        let mut members: Vec<usize> = (0..len).collect();
        members.shuffle(&mut pair_rng);
        let k = ((subset * len as f64).round() as usize).min(len);
        let mut cycle = members[..k].to_vec();
        cycle.sort_unstable();
        cycle.shuffle(&mut pair_rng);
        let mut sigma: Vec<usize> = (0..len).collect();
        if k >= 2 {
            for t in 0..k {
                sigma[cycle[t]] = cycle[(t + 1) % k];
            }
        }
        let id_b = &collection.shape(b).id;
        let perm = CorrespondenceMap::discrete(id_b, id_b, len, sigma)?;
        let forward = compose_maps(&perm, collection.map(a, b)?)?;
        let backward = compose_maps(collection.map(b, a)?, &perm.inverse()?)?;
        out.insert_map(forward)?;
        out.insert_map(backward)?;
        log.permuted.push(if k >= 2 { k } else { 0 });
    }
    Ok((out, log))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairStability {
    pub source: String,
    pub target: String,
    /// Flow edges among shapes present in both collections that differ.
    pub flow_diff: usize,
    /// Largest total-variation distance over the queried rows.
    pub tv: f64,
    pub mst_path_before: Vec<String>,
    pub mst_path_after: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub mst_before: Vec<(String, String)>,
    pub mst_after: Vec<(String, String)>,
    pub mst_added: Vec<(String, String)>,
    pub mst_removed: Vec<(String, String)>,
    pub pairs: Vec<PairStability>,
}

impl StabilityReport {
    pub fn max_tv(&self) -> f64 {
        self.pairs.iter().map(|p| p.tv).fold(0.0, f64::max)
    }

    pub fn total_flow_diff(&self) -> usize {
        self.pairs.iter().map(|p| p.flow_diff).sum()
    }

    pub fn mst_path_changes(&self) -> usize {
        self.pairs.iter().filter(|p| p.mst_path_before != p.mst_path_after).count()
    }
}

fn mst_edges_by_id(c: &ShapeCollection, tree: &TreeStructure) -> Vec<(String, String)> {
    let mut edges: Vec<(String, String)> = tree
        .edges
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (c.shape(a).id.clone(), c.shape(b).id.clone());
            if x <= y { (x, y) } else { (y, x) }
        })
        .collect();
    edges.sort();
    edges
}

/// Compares two collections that share shapes by id: spanning-tree edges,
/// and for every ordered pair of shared shapes the flow edges among shared
/// shapes and the soft correspondences of `query` vertices.
pub fn stability_report(
    before: &ShapeCollection,
    after: &ShapeCollection,
    options: &PathOptions,
    query: &crate::soft::QuerySet,
) -> Result<StabilityReport> {
    let shared: Vec<(usize, usize)> = before
        .shapes()
        .iter()
        .enumerate()
        .filter_map(|(k, s)| after.index_of(&s.id).ok().map(|m| (k, m)))
        .collect();
    let (tree_b, tree_a) = (TreeStructure::kruskal(before.graph()), TreeStructure::kruskal(after.graph()));
    let (mst_before, mst_after) = (mst_edges_by_id(before, &tree_b), mst_edges_by_id(after, &tree_a));
    let set_b: BTreeSet<_> = mst_before.iter().cloned().collect();
    let set_a: BTreeSet<_> = mst_after.iter().cloned().collect();
    let mst_added = set_a.difference(&set_b).cloned().collect();
    let mst_removed = set_b.difference(&set_a).cloned().collect();

    let ordered: Vec<((usize, usize), (usize, usize))> = shared
        .iter()
        .flat_map(|&x| shared.iter().filter(move |&&y| y != x).map(move |&y| (x, y)))
        .collect();
    let pairs = ordered
        .par_iter()
        .map(|&((ib, ia), (jb, ja))| {
            let run = || -> Result<PairStability> {
                let fb = directed_flow_matrix(before.graph(), ib, jb)?;
                let fa = directed_flow_matrix(after.graph(), ia, ja)?;
                let mut flow_diff = 0;
                for &(mb, ma) in &shared {
                    for &(nb, na) in &shared {
                        if mb != nb && fb.has_edge(mb, nb) != fa.has_edge(ma, na) {
                            flow_diff += 1;
                        }
                    }
                }
                let q = query.vertices(before, ib);
                let sb = propagate_soft(before, ib, jb, options, &q)?;
                let sa = propagate_soft(after, ia, ja, options, &q)?;
                let tv = sb
                    .rows
                    .iter()
                    .zip(&sa.rows)
                    .map(|((_, x), (_, y))| x.total_variation(y))
                    .fold(0.0, f64::max);
                let ids = |c: &ShapeCollection, p: Vec<usize>| p.into_iter().map(|v| c.shape(v).id.clone()).collect();
                Ok(PairStability {
                    source: before.shape(ib).id.clone(),
                    target: before.shape(jb).id.clone(),
                    flow_diff,
                    tv,
                    mst_path_before: ids(before, tree_b.path(ib, jb)),
                    mst_path_after: ids(after, tree_a.path(ia, ja)),
                })
            };
            run().map_err(|e| e.in_pair(ib, jb))
        })
        .collect::<Result<_>>()?;
    Ok(StabilityReport { mst_before, mst_after, mst_added, mst_removed, pairs })
}
