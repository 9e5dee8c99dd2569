//! Nearest-point queries over a fixed point set.

use std::num::NonZero;

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;

use crate::collection::Point;

/// Candidates fetched per query so that exact distance ties resolve to the
/// lowest index.
const TIE_CANDIDATES: usize = 8;

pub struct PointIndex {
    tree: ImmutableKdTree<f64, u64, 3, 32>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Point]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        PointIndex { tree: ImmutableKdTree::new_from_slice(&coords), len: points.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index and Euclidean distance of the nearest stored point; exact ties
    /// go to the lower index.
    pub fn nearest(&self, query: &Point) -> (usize, f64) {
        let q = [query.x, query.y, query.z];
        let k = NonZero::new(TIE_CANDIDATES.min(self.len).max(1)).unwrap();
        let best = self
            .tree
            .nearest_n::<SquaredEuclidean>(&q, k)
            .into_iter()
            .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.item.cmp(&b.item)))
            .expect("point index is empty");
        (best.item as usize, best.distance.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_with_ties() {
        let pts = vec![
            Point::new(1.0, 0.0, 0.0),
            Point::new(-1.0, 0.0, 0.0),
            Point::new(0.0, 3.0, 0.0),
        ];
        let index = PointIndex::new(&pts);
        assert_eq!(index.nearest(&Point::new(0.0, 0.0, 0.0)), (0, 1.0));
        assert_eq!(index.nearest(&Point::new(0.0, 2.5, 0.0)).0, 2);
    }
}
