//! Directed flow graphs between a source and a target shape, admissible path
//! enumeration and seeded walks.
//!
//! For a pair `(i, j)` the edge `m -> n` is admissible iff
//! `d(i, m) < d(i, n)` and `d(j, m) > d(j, n)`, both strict. Every edge moves
//! strictly away from `i`, so the result is always a DAG with `j` as a sink.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::collection::{edge_weight, SyncGraph};
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.978;
pub const DEFAULT_MAX_PATHS: usize = 1_000_000;
/// Largest graph the brute-force path oracle accepts.
pub const ORACLE_BOUND: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowEdge {
    pub to: usize,
    pub weight: f64,
    pub dist: f64,
}

/// Sparse directed flow graph for one ordered pair of vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMatrix {
    source: usize,
    target: usize,
    beta: f64,
    out: Vec<Vec<FlowEdge>>,
}

#[inline]
fn admissible(d_im: f64, d_in: f64, d_jm: f64, d_jn: f64) -> bool {
    d_im < d_in && d_jm > d_jn
}

fn check_endpoints(n: usize, i: usize, j: usize) -> Result<()> {
    for v in [i, j] {
        if v >= n {
            return Err(Error::IndexOutOfRange { context: "flow endpoint".into(), index: v, len: n });
        }
    }
    if i == j {
        return Err(Error::SameEndpoints(i));
    }
    Ok(())
}

/// Flow graph of `(i, j)` over the complete synchronization graph.
pub fn directed_flow_matrix(graph: &SyncGraph, i: usize, j: usize) -> Result<FlowMatrix> {
    let n = graph.len();
    check_endpoints(n, i, j)?;
    let out = (0..n)
        .map(|m| {
            (0..n)
                .filter(|&k| admissible(graph.d(i, m), graph.d(i, k), graph.d(j, m), graph.d(j, k)))
                .map(|k| FlowEdge { to: k, weight: graph.w(m, k), dist: graph.d(m, k) })
                .collect()
        })
        .collect();
    Ok(FlowMatrix { source: i, target: j, beta: graph.beta(), out })
}

impl FlowMatrix {
    /// Flow graph restricted to candidate edges `m -> candidates(m)` of an
    /// arbitrary metric, weighted by `exp(-beta d^2)`.
    pub fn from_metric<I>(
        n: usize,
        i: usize,
        j: usize,
        beta: f64,
        d: impl Fn(usize, usize) -> f64,
        candidates: impl Fn(usize) -> I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = usize>,
    {
        check_endpoints(n, i, j)?;
        let mut out = Vec::with_capacity(n);
        for m in 0..n {
            let mut edges = Vec::new();
            for k in candidates(m) {
                if k != m && admissible(d(i, m), d(i, k), d(j, m), d(j, k)) {
                    let dist = d(m, k);
                    edges.push(FlowEdge { to: k, weight: edge_weight(dist, beta)?, dist });
                }
            }
            edges.sort_by_key(|e| e.to);
            edges.dedup_by_key(|e| e.to);
            out.push(edges);
        }
        Ok(FlowMatrix { source: i, target: j, beta, out })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    /// Outgoing edges of `m`, ascending by head vertex.
    pub fn out_edges(&self, m: usize) -> &[FlowEdge] {
        &self.out[m]
    }

    pub fn has_edge(&self, m: usize, n: usize) -> bool {
        self.out[m].binary_search_by_key(&n, |e| e.to).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// All edges in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(m, list)| list.iter().map(move |e| (m, e.to)))
            .collect()
    }

    /// Binary adjacency matrix `F`.
    pub fn dense(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        let mut f = vec![vec![0u8; n]; n];
        for (m, n) in self.edges() {
            f[m][n] = 1;
        }
        f
    }

    /// Weighted adjacency `W ∘ F`.
    pub fn weighted(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut wf = vec![vec![0.0; n]; n];
        for (m, list) in self.out.iter().enumerate() {
            for e in list {
                wf[m][e.to] = e.weight;
            }
        }
        wf
    }

    /// A topological order, or `None` if the graph has a directed cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indegree = vec![0usize; n];
        for list in &self.out {
            for e in list {
                indegree[e.to] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for e in &self.out[v] {
                indegree[e.to] -= 1;
                if indegree[e.to] == 0 {
                    ready.push(e.to);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    fn edge(&self, m: usize, n: usize) -> Option<&FlowEdge> {
        self.out[m].binary_search_by_key(&n, |e| e.to).ok().map(|k| &self.out[m][k])
    }
}

/// An admissible path with its energy `Σ d²` and weight (product of the
/// traversed edge weights).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathRecord {
    pub vertices: Vec<usize>,
    pub energy: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathOptions {
    /// Minimum raw path weight.
    pub lambda: f64,
    pub max_paths: usize,
    /// Drop the direct path when its weight is below `lambda`.
    pub strict: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { lambda: DEFAULT_LAMBDA, max_paths: DEFAULT_MAX_PATHS, strict: false }
    }
}

impl PathOptions {
    pub fn with_lambda(lambda: f64) -> Self {
        PathOptions { lambda, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.max_paths == 0 {
            return Err(Error::InvalidParameter("max_paths must be positive".into()));
        }
        Ok(())
    }
}

/// All source-to-target paths of the flow graph with weight at least
/// `lambda`, in lexicographic vertex order.
///
/// Edge weights never exceed one, so a partial path already below `lambda`
/// is cut. The direct path is kept regardless of `lambda` unless `strict`.
pub fn enumerate_paths(flow: &FlowMatrix, options: &PathOptions) -> Result<Vec<PathRecord>> {
    options.validate()?;
    let mut out = Vec::new();
    let mut path = vec![flow.source];
    dfs(flow, options, &mut path, 1.0, 0.0, &mut out)?;
    Ok(out)
}

fn dfs(
    flow: &FlowMatrix,
    options: &PathOptions,
    path: &mut Vec<usize>,
    weight: f64,
    energy: f64,
    out: &mut Vec<PathRecord>,
) -> Result<()> {
    let v = *path.last().unwrap();
    for e in flow.out_edges(v) {
        let w = weight * e.weight;
        let direct = path.len() == 1 && e.to == flow.target;
        if w < options.lambda && !(direct && !options.strict) {
            continue;
        }
        let en = energy + e.dist * e.dist;
        path.push(e.to);
        if e.to == flow.target {
            if out.len() == options.max_paths {
                return Err(Error::TooManyPaths(options.max_paths));
            }
            out.push(PathRecord { vertices: path.clone(), energy: en, weight: w });
        } else {
            dfs(flow, options, path, w, en, out)?;
        }
        path.pop();
    }
    Ok(())
}

/// Exhaustive oracle: every simple `i -> j` path of the complete graph whose
/// consecutive pairs satisfy the flow condition, filtered by `lambda` like
/// [`enumerate_paths`].
pub fn brute_force_paths(graph: &SyncGraph, i: usize, j: usize, lambda: f64, strict: bool) -> Result<Vec<PathRecord>> {
    let n = graph.len();
    if n > ORACLE_BOUND {
        return Err(Error::OracleBound { n, bound: ORACLE_BOUND });
    }
    check_endpoints(n, i, j)?;
    let mut simple = Vec::new();
    let mut path = vec![i];
    let mut used = vec![false; n];
    used[i] = true;
    all_simple_paths(n, j, &mut path, &mut used, &mut simple);

    let mut out: Vec<PathRecord> = simple
        .into_iter()
        .filter(|p| {
            p.windows(2)
                .all(|e| admissible(graph.d(i, e[0]), graph.d(i, e[1]), graph.d(j, e[0]), graph.d(j, e[1])))
        })
        .map(|p| {
            let weight = p.windows(2).map(|e| graph.w(e[0], e[1])).product();
            let energy = graph.energy(&p);
            PathRecord { vertices: p, energy, weight }
        })
        .filter(|r| r.weight >= lambda || (r.vertices.len() == 2 && !strict))
        .collect();
    out.sort_by(|a, b| a.vertices.cmp(&b.vertices));
    Ok(out)
}

fn all_simple_paths(n: usize, target: usize, path: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
    for v in 0..n {
        if used[v] {
            continue;
        }
        path.push(v);
        if v == target {
            out.push(path.clone());
        } else {
            used[v] = true;
            all_simple_paths(n, target, path, used, out);
            used[v] = false;
        }
        path.pop();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkStatus {
    Reached,
    Discarded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkResult {
    pub trajectory: Vec<usize>,
    pub status: WalkStatus,
}

/// Walk from the source choosing each step with probability proportional to
/// the outgoing weights; ends at the target or at another sink.
pub fn sample_walk(flow: &FlowMatrix, seed: u64, max_steps: usize) -> Result<WalkResult> {
    sample_walk_with(flow, &mut ChaCha8Rng::seed_from_u64(seed), max_steps)
}

pub fn sample_walk_with<R: Rng + ?Sized>(flow: &FlowMatrix, rng: &mut R, max_steps: usize) -> Result<WalkResult> {
    let mut trajectory = vec![flow.source];
    let mut v = flow.source;
    loop {
        if v == flow.target {
            return Ok(WalkResult { trajectory, status: WalkStatus::Reached });
        }
        let edges = flow.out_edges(v);
        if edges.is_empty() {
            return Ok(WalkResult { trajectory, status: WalkStatus::Discarded });
        }
        if trajectory.len() > max_steps {
            return Err(Error::MaxSteps(max_steps));
        }
        let k = match WeightedIndex::new(edges.iter().map(|e| e.weight)) {
            Ok(dist) => dist.sample(rng),
            // every weight underflowed; fall back to a uniform step
            Err(_) => rng.random_range(0..edges.len()),
        };
        v = edges[k].to;
        trajectory.push(v);
    }
}

/// Weight of an explicit path, or `None` if some step is not a flow edge.
pub fn path_weight(flow: &FlowMatrix, vertices: &[usize]) -> Option<f64> {
    vertices.windows(2).map(|e| flow.edge(e[0], e[1]).map(|x| x.weight)).product()
}
