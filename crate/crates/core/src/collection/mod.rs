//! Shapes, pairwise distances and correspondence maps.

mod geodesic;
mod graph;
pub mod io;
mod map;
mod shape;

use std::collections::BTreeMap;

pub use geodesic::{intra_metric, GeodesicOracle, NeighborGraph, DEFAULT_NEIGHBORS};
pub use graph::{edge_weight, euclidean, SyncGraph, DEFAULT_BETA, SYMMETRY_TOLERANCE};
pub use map::{compose_maps, CorrespondenceMap, Distribution, MapData, MapKind, PRUNE_MASS, ROW_SUM_TOLERANCE};
pub use shape::{Point, Shape};

use crate::error::{Error, Result};

/// An immutable collection of shapes with their synchronization graph and
/// the stored pairwise maps, keyed by `(source, target)` shape index.
#[derive(Clone, Debug)]
pub struct ShapeCollection {
    shapes: Vec<Shape>,
    graph: SyncGraph,
    maps: BTreeMap<(usize, usize), CorrespondenceMap>,
}

impl ShapeCollection {
    pub fn new(shapes: Vec<Shape>, graph: SyncGraph, maps: Vec<CorrespondenceMap>) -> Result<Self> {
        if shapes.len() != graph.len() {
            return Err(Error::InvalidMetric(format!(
                "{} shapes but a {}x{} distance matrix",
                shapes.len(),
                graph.len(),
                graph.len()
            )));
        }
        for (i, s) in shapes.iter().enumerate() {
            s.validate()?;
            if shapes[..i].iter().any(|t| t.id == s.id) {
                return Err(Error::InvalidShape { id: s.id.clone(), reason: "duplicate id".into() });
            }
        }
        let mut collection = ShapeCollection { shapes, graph, maps: BTreeMap::new() };
        for map in maps {
            collection.insert_map(map)?;
        }
        Ok(collection)
    }

    /// Adds or replaces a map after checking it against both shapes.
    pub fn insert_map(&mut self, map: CorrespondenceMap) -> Result<()> {
        let from = self.index_of(map.source_id())?;
        let to = self.index_of(map.target_id())?;
        let invalid = |reason: String| Error::InvalidMap { map: map.label(), reason };
        if from == to {
            return Err(invalid("maps from a shape to itself are implicit".into()));
        }
        if map.source_len() != self.shapes[from].len() {
            return Err(invalid(format!(
                "{} source rows for {} points",
                map.source_len(),
                self.shapes[from].len()
            )));
        }
        if map.target_len() != self.shapes[to].len() {
            return Err(invalid(format!(
                "target size {} for {} points",
                map.target_len(),
                self.shapes[to].len()
            )));
        }
        self.maps.insert((from, to), map);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn shape(&self, index: usize) -> &Shape {
        &self.shapes[index]
    }

    pub fn graph(&self) -> &SyncGraph {
        &self.graph
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.shapes
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::UnknownShape(id.to_string()))
    }

    /// Stored map from shape `from` to shape `to`.
    pub fn map(&self, from: usize, to: usize) -> Result<&CorrespondenceMap> {
        self.maps.get(&(from, to)).ok_or_else(|| Error::MissingMap {
            from: self.shapes[from].id.clone(),
            to: self.shapes[to].id.clone(),
        })
    }

    pub fn maps(&self) -> impl Iterator<Item = (&(usize, usize), &CorrespondenceMap)> {
        self.maps.iter()
    }

    /// Pushes a distribution on the first path vertex through each stored
    /// map along `path`.
    pub fn push_along(&self, path: &[usize], start: &Distribution) -> Result<Distribution> {
        let mut current = start.clone();
        for step in path.windows(2) {
            current = self.map(step[0], step[1])?.push_forward(&current).pruned();
        }
        Ok(current)
    }

    /// Composed map along `path` (`f_{a_k a_{k-1}} ∘ … ∘ f_{a_2 a_1}`).
    pub fn compose_along(&self, path: &[usize]) -> Result<CorrespondenceMap> {
        let first = *path.first().ok_or_else(|| Error::InvalidParameter("empty path".into()))?;
        let mut acc = CorrespondenceMap::identity(&self.shapes[first].id, self.shapes[first].len());
        for step in path.windows(2) {
            acc = compose_maps(self.map(step[0], step[1])?, &acc)?;
        }
        Ok(acc)
    }

    /// Same shapes and maps over a different distance matrix (used when
    /// only the metric changes, e.g. synthetic corruption of distances).
    pub fn with_graph(&self, graph: SyncGraph) -> Result<Self> {
        ShapeCollection::new(self.shapes.clone(), graph, self.maps.values().cloned().collect())
    }

    /// Appends a shape with its distances to the existing shapes and any
    /// maps touching it.
    pub fn with_shape(
        &self,
        shape: Shape,
        distances_to_new: &[f64],
        maps: Vec<CorrespondenceMap>,
        allow_duplicates: bool,
    ) -> Result<Self> {
        let graph = self.graph.with_vertex(distances_to_new, allow_duplicates)?;
        let mut shapes = self.shapes.clone();
        shapes.push(shape);
        let all_maps = self.maps.values().cloned().chain(maps).collect();
        ShapeCollection::new(shapes, graph, all_maps)
    }

    /// Removes a shape and every map touching it.
    pub fn without_shape(&self, index: usize) -> Result<Self> {
        let graph = self.graph.without_vertex(index)?;
        let mut shapes = self.shapes.clone();
        shapes.remove(index);
        let maps = self
            .maps
            .iter()
            .filter(|((a, b), _)| *a != index && *b != index)
            .map(|(_, m)| m.clone())
            .collect();
        ShapeCollection::new(shapes, graph, maps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point_shape(id: &str) -> Shape {
        Shape::new(id, vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)])
    }

    #[test]
    fn identity_pair_collection() {
        let shapes = vec![two_point_shape("s1"), two_point_shape("s2")];
        let graph = SyncGraph::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], 1.0, false).unwrap();
        let maps = vec![
            CorrespondenceMap::identity("s1", 2),
            CorrespondenceMap::identity("s2", 2),
        ];
        // identity maps name a single shape and are rejected as self-maps
        assert!(ShapeCollection::new(shapes.clone(), graph.clone(), maps).is_err());

        let maps = vec![
            CorrespondenceMap::discrete("s1", "s2", 2, vec![0, 1]).unwrap(),
            CorrespondenceMap::discrete("s2", "s1", 2, vec![0, 1]).unwrap(),
        ];
        let c = ShapeCollection::new(shapes, graph, maps).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.graph().w(0, 1), (-1.0f64).exp());
        assert!(c.map(0, 1).is_ok());
    }

    #[test]
    fn missing_map_is_reported() {
        let shapes = vec![two_point_shape("s1"), two_point_shape("s2")];
        let graph = SyncGraph::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], 1.0, false).unwrap();
        let c = ShapeCollection::new(shapes, graph, vec![]).unwrap();
        assert!(matches!(c.map(0, 1), Err(Error::MissingMap { .. })));
    }

    #[test]
    fn map_sizes_are_checked() {
        let shapes = vec![two_point_shape("s1"), two_point_shape("s2")];
        let graph = SyncGraph::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], 1.0, false).unwrap();
        let bad = CorrespondenceMap::discrete("s1", "s2", 3, vec![0, 2]).unwrap();
        assert!(ShapeCollection::new(shapes, graph, vec![bad]).is_err());
    }
}
