//! Intra-shape geodesic distances as shortest paths over a neighbor graph.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::OnceLock;

use rayon::prelude::*;

use super::shape::{Point, Shape};
use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 8;

/// Undirected weighted graph over the vertices of one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    /// Builds a graph from undirected edges; duplicates are merged and each
    /// adjacency list is sorted by neighbor index.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (a, b, len) in edges {
            if a == b {
                continue;
            }
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
        }
        for list in &mut adjacency {
            list.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            list.dedup_by_key(|e| e.0);
        }
        NeighborGraph { adjacency }
    }

    /// Symmetric k-nearest-neighbor graph (union of directed kNN edges) with
    /// Euclidean edge lengths. Ties in distance go to the lower index.
    pub fn knn(points: &[Point], k: usize) -> Self {
        let n = points.len();
        let k = k.min(n.saturating_sub(1));
        let directed: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|a| {
                let mut cand: Vec<(f64, usize)> = (0..n)
                    .filter(|&b| b != a)
                    .map(|b| ((points[a] - points[b]).norm(), b))
                    .collect();
                let by_dist = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
                if k < cand.len() {
                    cand.select_nth_unstable_by(k, by_dist);
                    cand.truncate(k);
                }
                cand.into_iter().map(|(d, b)| (b, d)).collect()
            })
            .collect();
        let edges = directed
            .into_iter()
            .enumerate()
            .flat_map(|(a, list)| list.into_iter().map(move |(b, d)| (a, b, d)));
        NeighborGraph::from_edges(n, edges)
    }

    /// Edges of a triangle list with Euclidean lengths.
    pub fn from_faces(points: &[Point], faces: &[[usize; 3]]) -> Self {
        let edges = faces.iter().flat_map(|f| {
            [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                .into_iter()
                .map(|(a, b)| (a, b, (points[a] - points[b]).norm()))
        });
        NeighborGraph::from_edges(points.len(), edges)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(u, _) in &self.adjacency[v] {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                        queue.push_back(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Vertices within `hops` edges of `v`, excluding `v`, ascending.
    pub fn within_hops(&self, v: usize, hops: usize) -> Vec<usize> {
        let mut depth = vec![usize::MAX; self.len()];
        depth[v] = 0;
        let mut queue = VecDeque::from([v]);
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            if depth[u] == hops {
                continue;
            }
            for &(w, _) in &self.adjacency[u] {
                if depth[w] == usize::MAX {
                    depth[w] = depth[u] + 1;
                    out.push(w);
                    queue.push_back(w);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Single-source shortest path lengths.
    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::from([HeapEntry { dist: 0.0, vertex: source }]);
        while let Some(HeapEntry { dist: d, vertex: v }) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(u, len) in &self.adjacency[v] {
                let nd = d + len;
                if nd < dist[u] {
                    dist[u] = nd;
                    heap.push(HeapEntry { dist: nd, vertex: u });
                }
            }
        }
        dist
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on vertex index
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Geodesic distance queries on one shape.
///
/// Shortest-path rows are computed on first use and then frozen; queries are
/// safe from many threads.
#[derive(Debug)]
pub struct GeodesicOracle {
    shape_id: String,
    graph: NeighborGraph,
    rows: Vec<OnceLock<Vec<f64>>>,
    diameter: OnceLock<f64>,
}

impl GeodesicOracle {
    pub fn new(shape_id: impl Into<String>, graph: NeighborGraph) -> Result<Self> {
        let shape_id = shape_id.into();
        let components = graph.components();
        if components.len() > 1 {
            return Err(Error::Disconnected { shape: shape_id, components });
        }
        let rows = (0..graph.len()).map(|_| OnceLock::new()).collect();
        Ok(GeodesicOracle { shape_id, graph, rows, diameter: OnceLock::new() })
    }

    pub fn shape_id(&self) -> &str {
        &self.shape_id
    }

    pub fn graph(&self) -> &NeighborGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.rows[v].get_or_init(|| self.graph.dijkstra(v))
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        // reuse whichever row is already cached
        match (self.rows[a].get(), self.rows[b].get()) {
            (Some(r), _) => r[b],
            (None, Some(r)) => r[a],
            (None, None) => self.row(a)[b],
        }
    }

    /// Vertices at geodesic distance at most `radius` from `center`.
    pub fn ball(&self, center: usize, radius: f64) -> Vec<usize> {
        self.row(center)
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d <= radius)
            .map(|(v, _)| v)
            .collect()
    }

    /// Largest geodesic distance between any two vertices.
    pub fn diameter(&self) -> f64 {
        *self.diameter.get_or_init(|| {
            (0..self.len())
                .into_par_iter()
                .map(|v| self.graph.dijkstra(v).into_iter().fold(0.0, f64::max))
                .reduce(|| 0.0, f64::max)
        })
    }

    pub fn ensure_shape(&self, expected: &str) -> Result<()> {
        if self.shape_id != expected {
            return Err(Error::OracleMismatch { oracle: self.shape_id.clone(), expected: expected.into() });
        }
        Ok(())
    }
}

/// Geodesic oracle on a shape: mesh edges when faces are present, otherwise a
/// symmetric `k`-nearest-neighbor graph.
pub fn intra_metric(shape: &Shape, k: usize) -> Result<GeodesicOracle> {
    if k == 0 {
        return Err(Error::InvalidParameter("neighbor count must be positive".into()));
    }
    let graph = match &shape.faces {
        Some(faces) => NeighborGraph::from_faces(&shape.points, faces),
        None => NeighborGraph::knn(&shape.points, k),
    };
    GeodesicOracle::new(shape.id.clone(), graph)
}
