//! Numerical checks of the geometry behind directed path propagation:
//! random walks on a square lattice, parallel transport and holonomy on the
//! unit sphere, and the curve condition of directed walks.

pub mod curve;
pub mod error;
pub mod lattice;
pub mod sphere;

pub use curve::{enhanced_eop_check, EopCheck};
pub use error::{Error, Result};
pub use lattice::{lattice_walks, LatticeGraph, WalkMode, WalkSet};
pub use sphere::{holonomy_deficit, transport_along_path, GeodesicLeg, GeodesicLegPath, SphereTriangle, TangentVector, Vec3};
