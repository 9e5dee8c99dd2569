//! The synchronization graph: pairwise shape distances and their Gibbs weights.

use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 1.0;

/// Allowed asymmetry of an input distance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// `exp(-beta * d^2)`; equals 1 exactly when `d == 0`.
pub fn edge_weight(d: f64, beta: f64) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::NegativeDistance(d));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    Ok((-beta * d * d).exp())
}

/// Complete graph over the shapes of a collection with distances `D` and
/// weights `W = exp(-beta D∘D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncGraph {
    n: usize,
    dist: Vec<f64>,
    weight: Vec<f64>,
    beta: f64,
}

impl SyncGraph {
    /// Validates and stores a distance matrix given as rows.
    ///
    /// The upper triangle is kept for both directions once symmetry within
    /// [`SYMMETRY_TOLERANCE`] has been checked.
    pub fn new(rows: Vec<Vec<f64>>, beta: f64, allow_duplicates: bool) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMetric("empty distance matrix".into()));
        }
        if let Some(r) = rows.iter().position(|row| row.len() != n) {
            return Err(Error::InvalidMetric(format!(
                "row {r} has {} entries, expected {n}",
                rows[r].len()
            )));
        }
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            if rows[a][a] != 0.0 {
                return Err(Error::InvalidMetric(format!("diagonal entry {a} is {}", rows[a][a])));
            }
            for b in (a + 1)..n {
                let (forward, backward) = (rows[a][b], rows[b][a]);
                for v in [forward, backward] {
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::InvalidMetric(format!("entry ({a}, {b}) is {v}")));
                    }
                }
                if (forward - backward).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::MetricAsymmetry { row: a, col: b, forward, backward });
                }
                if forward == 0.0 && !allow_duplicates {
                    return Err(Error::DuplicateShapes { first: a, second: b });
                }
                dist[a * n + b] = forward;
                dist[b * n + a] = forward;
            }
        }
        let weight = dist
            .iter()
            .map(|&d| edge_weight(d, beta))
            .collect::<Result<Vec<_>>>()?;
        if let Some(pos) = weight.iter().position(|&w| w <= 0.0) {
            return Err(Error::InvalidMetric(format!(
                "weight of entry ({}, {}) underflows to zero; rescale distances or beta",
                pos / n,
                pos % n
            )));
        }
        Ok(SyncGraph { n, dist, weight, beta })
    }

    /// Distances from a function of vertex pairs (evaluated for `a < b`).
    pub fn from_fn(
        n: usize,
        beta: f64,
        allow_duplicates: bool,
        mut d: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut rows = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in (a + 1)..n {
                let v = d(a, b);
                rows[a][b] = v;
                rows[b][a] = v;
            }
        }
        SyncGraph::new(rows, beta, allow_duplicates)
    }

    /// Euclidean distances between coordinate vectors.
    pub fn from_coordinates(coords: &[Vec<f64>], beta: f64) -> Result<Self> {
        SyncGraph::from_fn(coords.len(), beta, false, |a, b| euclidean(&coords[a], &coords[b]))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b]
    }

    #[inline]
    pub fn w(&self, a: usize, b: usize) -> f64 {
        self.weight[a * self.n + b]
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.dist[a * self.n..(a + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|a| self.row(a).to_vec()).collect()
    }

    /// Sum of squared distances along consecutive vertices, in path order.
    pub fn energy(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|e| self.d(e[0], e[1]).powi(2)).sum()
    }

    /// Graph with one more vertex appended at index `len()`.
    pub fn with_vertex(&self, distances_to_new: &[f64], allow_duplicates: bool) -> Result<Self> {
        if distances_to_new.len() != self.n {
            return Err(Error::InvalidMetric(format!(
                "new vertex needs {} distances, got {}",
                self.n,
                distances_to_new.len()
            )));
        }
        let mut rows = self.rows();
        for (row, &d) in rows.iter_mut().zip(distances_to_new) {
            row.push(d);
        }
        let mut last = distances_to_new.to_vec();
        last.push(0.0);
        rows.push(last);
        SyncGraph::new(rows, self.beta, allow_duplicates)
    }

    /// Graph with `vertex` removed; later indices shift down by one.
    pub fn without_vertex(&self, vertex: usize) -> Result<Self> {
        if vertex >= self.n {
            return Err(Error::IndexOutOfRange { context: "graph vertex".into(), index: vertex, len: self.n });
        }
        let keep: Vec<usize> = (0..self.n).filter(|&v| v != vertex).collect();
        self.induced(&keep)
    }

    /// Subgraph on `vertices`, relabelled `0..vertices.len()` in the given order.
    pub fn induced(&self, vertices: &[usize]) -> Result<Self> {
        let rows = vertices
            .iter()
            .map(|&a| vertices.iter().map(|&b| self.d(a, b)).collect())
            .collect();
        SyncGraph::new(rows, self.beta, true)
    }

    /// Index minimizing the sum of squared distances to all others; ties go
    /// to the lowest index.
    pub fn frechet_mean_index(&self) -> usize {
        let mut best = (f64::INFINITY, 0);
        for a in 0..self.n {
            let s: f64 = self.row(a).iter().map(|d| d * d).sum();
            if s < best.0 {
                best = (s, a);
            }
        }
        best.1
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
