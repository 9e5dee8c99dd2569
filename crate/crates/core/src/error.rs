use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("distance matrix is asymmetric at ({row}, {col}): {forward} vs {backward}")]
    MetricAsymmetry { row: usize, col: usize, forward: f64, backward: f64 },

    #[error("invalid distance matrix: {0}")]
    InvalidMetric(String),

    #[error("shapes {first} and {second} are at distance zero (duplicates not allowed)")]
    DuplicateShapes { first: usize, second: usize },

    #[error("index {index} out of range for {context} (len {len})")]
    IndexOutOfRange { context: String, index: usize, len: usize },

    #[error("soft row {row} of map {map} sums to {sum}, expected 1")]
    NonNormalizedRow { map: String, row: usize, sum: f64 },

    #[error("invalid shape {id}: {reason}")]
    InvalidShape { id: String, reason: String },

    #[error("invalid map {map}: {reason}")]
    InvalidMap { map: String, reason: String },

    #[error("negative distance {0}")]
    NegativeDistance(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot compose maps: inner targets {inner_target} but outer starts at {outer_source}")]
    MapMismatch { inner_target: String, outer_source: String },

    #[error("neighbor graph of shape {shape} is disconnected: {}", describe_components(.components))]
    Disconnected { shape: String, components: Vec<Vec<usize>> },

    #[error("no map stored from {from} to {to}")]
    MissingMap { from: String, to: String },

    #[error("unknown shape id {0}")]
    UnknownShape(String),

    #[error("flow endpoints coincide (vertex {0})")]
    SameEndpoints(usize),

    #[error("path enumeration exceeded max_paths = {0}; raise lambda or max_paths")]
    TooManyPaths(usize),

    #[error("brute-force oracle limited to n <= {bound}, got n = {n}")]
    OracleBound { n: usize, bound: usize },

    #[error("walk exceeded {0} steps")]
    MaxSteps(usize),

    #[error("no admissible path from {from} to {to} above the weight threshold")]
    EmptyPathSet { from: usize, to: usize },

    #[error("empty distribution for source vertex {0}")]
    EmptyRow(usize),

    #[error("geodesic oracle belongs to shape {oracle}, expected {expected}")]
    OracleMismatch { oracle: String, expected: String },

    #[error("vertices {from} and {to} are disconnected after pruning at epsilon {epsilon}: {}", describe_components(.components))]
    PrunedDisconnected { from: usize, to: usize, epsilon: f64, components: Vec<Vec<usize>> },

    #[error("landmark balls overlap on shape {shape}: vertices {a} and {b} at distance {distance} <= 2R = {}", 2.0 * .radius)]
    BallOverlap { shape: String, a: usize, b: usize, distance: f64, radius: f64 },

    #[error("shape {0} has no scalar field")]
    MissingField(String),

    #[error("no landmark matches to interpolate")]
    NoMatches,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no shared ground-truth labels between {0} and {1}")]
    NoSharedLabels(String, String),

    #[error("pair ({from}, {to}): {inner}")]
    Pair { from: usize, to: usize, inner: Box<Error> },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io { path: path.into(), err }
    }

    pub(crate) fn in_pair(self, from: usize, to: usize) -> Self {
        Error::Pair { from, to, inner: Box::new(self) }
    }
}

fn describe_components(components: &[Vec<usize>]) -> String {
    let parts: Vec<String> = components
        .iter()
        .map(|c| match c.first() {
            Some(first) => format!("{{{first}..; {} vertices}}", c.len()),
            None => "{}".to_string(),
        })
        .collect();
    format!("{} components {}", components.len(), parts.join(" "))
}
