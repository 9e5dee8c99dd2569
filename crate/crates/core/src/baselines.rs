//! Propagation baselines: the stored pairwise map, composition along a
//! minimum spanning tree, and composition along a shortest path of the
//! pruned synchronization graph.

use std::str::FromStr;

use serde::Serialize;

use crate::collection::{CorrespondenceMap, ShapeCollection, SyncGraph};
use crate::error::{Error, Result};

/// The stored map from `i` to `j` (identity when `i == j`).
pub fn direct_propagate(collection: &ShapeCollection, i: usize, j: usize) -> Result<CorrespondenceMap> {
    if i == j {
        let s = collection.shape(i);
        return Ok(CorrespondenceMap::identity(&s.id, s.len()));
    }
    collection.map(i, j).cloned()
}

/// Minimum spanning tree of the distance matrix with parent and depth tables
/// rooted at vertex 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeStructure {
    /// Tree edges `(a, b)` with `a < b`, in the order Kruskal accepted them.
    pub edges: Vec<(usize, usize)>,
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<usize>,
    pub total_weight: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, v: usize) -> usize {
        let mut root = v;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut v = v;
        while self.parent[v] != root {
            let next = self.parent[v];
            self.parent[v] = root;
            v = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

impl TreeStructure {
    /// Kruskal on `D`; equal distances are taken in lexicographic `(a, b)`
    /// order.
    pub fn kruskal(graph: &SyncGraph) -> Self {
        let n = graph.len();
        let mut candidates: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
        candidates.sort_by(|x, y| graph.d(x.0, x.1).total_cmp(&graph.d(y.0, y.1)).then(x.cmp(y)));
        let mut uf = UnionFind::new(n);
        let mut edges = Vec::with_capacity(n.saturating_sub(1));
        let mut total_weight = 0.0;
        for (a, b) in candidates {
            if uf.union(a, b) {
                edges.push((a, b));
                total_weight += graph.d(a, b);
                if edges.len() + 1 == n {
                    break;
                }
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut parent = vec![None; n];
        let mut depth = vec![0; n];
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        if n > 0 {
            seen[0] = true;
        }
        while let Some(v) = stack.pop() {
            for &u in &adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    parent[u] = Some(v);
                    depth[u] = depth[v] + 1;
                    stack.push(u);
                }
            }
        }
        TreeStructure { edges, parent, depth, total_weight }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// The unique tree path from `i` to `j`.
    pub fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let (mut a, mut b) = (i, j);
        let mut head = vec![a];
        let mut tail = vec![b];
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a].expect("tree is connected");
                head.push(a);
            } else {
                b = self.parent[b].expect("tree is connected");
                tail.push(b);
            }
        }
        // the meeting vertex ends both halves
        tail.pop();
        head.extend(tail.into_iter().rev());
        head
    }

    /// Leaves of the tree, ascending.
    pub fn leaves(&self) -> Vec<usize> {
        let mut degree = vec![0usize; self.len()];
        for &(a, b) in &self.edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        (0..self.len()).filter(|&v| degree[v] == 1).collect()
    }
}

/// Composition of the stored maps along the tree path from `i` to `j`.
pub fn mst_propagate(
    collection: &ShapeCollection,
    tree: &TreeStructure,
    i: usize,
    j: usize,
) -> Result<(CorrespondenceMap, Vec<usize>)> {
    let path = tree.path(i, j);
    Ok((collection.compose_along(&path)?, path))
}

/// Edge cost used by the shortest-path baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeCost {
    /// `d^2`, the path energy.
    #[default]
    Squared,
    /// `d`.
    Linear,
    /// `-log w = beta d^2`.
    NegLogWeight,
}

impl EdgeCost {
    pub fn cost(self, graph: &SyncGraph, a: usize, b: usize) -> f64 {
        let d = graph.d(a, b);
        match self {
            EdgeCost::Squared => d * d,
            EdgeCost::Linear => d,
            EdgeCost::NegLogWeight => graph.beta() * d * d,
        }
    }
}

impl FromStr for EdgeCost {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(EdgeCost::Squared),
            "linear" => Ok(EdgeCost::Linear),
            "neg-log-weight" => Ok(EdgeCost::NegLogWeight),
            other => Err(Error::InvalidParameter(format!("unknown edge cost {other:?}"))),
        }
    }
}

/// Connected components of the graph keeping edges with `d <= epsilon`.
pub fn pruned_components(graph: &SyncGraph, epsilon: f64) -> Vec<Vec<usize>> {
    let n = graph.len();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        comp[start] = id;
        let mut members = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if comp[u] == usize::MAX && graph.d(v, u) <= epsilon {
                    comp[u] = id;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Smallest pruning radius that keeps the graph connected, found by binary
/// search over the sorted pairwise distances.
pub fn default_epsilon(graph: &SyncGraph) -> f64 {
    let n = graph.len();
    let mut values: Vec<f64> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).map(|(a, b)| graph.d(a, b)).collect();
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    let (mut lo, mut hi) = (0, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pruned_components(graph, values[mid]).len() == 1 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    values[lo]
}

/// Minimum-cost path from `i` to `j` over edges with `d <= epsilon`; among
/// equal costs the lexicographically smallest vertex sequence wins.
pub fn shortest_path(graph: &SyncGraph, i: usize, j: usize, epsilon: f64, cost: EdgeCost) -> Result<Vec<usize>> {
    let n = graph.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut best: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut done = vec![false; n];
    dist[i] = 0.0;
    best[i] = vec![i];
    loop {
        let next = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(best[a].cmp(&best[b])));
        let Some(v) = next else { break };
        done[v] = true;
        if v == j {
            break;
        }
        for u in 0..n {
            if done[u] || u == v || graph.d(v, u) > epsilon {
                continue;
            }
            let c = dist[v] + cost.cost(graph, v, u);
            let mut candidate = best[v].clone();
            candidate.push(u);
            if c < dist[u] || (c == dist[u] && candidate < best[u]) {
                dist[u] = c;
                best[u] = candidate;
            }
        }
    }
    if !done[j] {
        return Err(Error::PrunedDisconnected {
            from: i,
            to: j,
            epsilon,
            components: pruned_components(graph, epsilon),
        });
    }
    Ok(std::mem::take(&mut best[j]))
}

/// Composition of the stored maps along the shortest path from `i` to `j`.
pub fn shortest_path_propagate(
    collection: &ShapeCollection,
    i: usize,
    j: usize,
    epsilon: f64,
    cost: EdgeCost,
) -> Result<(CorrespondenceMap, Vec<usize>)> {
    let path = shortest_path(collection.graph(), i, j, epsilon, cost)?;
    Ok((collection.compose_along(&path)?, path))
}
