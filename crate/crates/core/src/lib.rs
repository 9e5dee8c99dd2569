//! Correspondence synchronization for shape collections.
//!
//! Pairwise maps are propagated along directed "eyes on the prize" paths of a
//! metric synchronization graph and weighted by a Gibbs measure on path
//! energy. The crate also provides the direct, spanning-tree and
//! shortest-path baselines, landmark partial matching, and a benchmark
//! harness.

pub mod baselines;
pub mod benchmark;
pub mod collection;
pub mod error;
pub mod flow;
pub mod matching;
pub mod soft;
pub mod spatial;

pub use collection::{
    compose_maps, edge_weight, intra_metric, CorrespondenceMap, Distribution, GeodesicOracle, Point, Shape,
    ShapeCollection, SyncGraph,
};
pub use error::{Error, Result};
