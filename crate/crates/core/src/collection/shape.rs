use std::collections::BTreeMap;

use nalgebra::Point3;

use crate::error::{Error, Result};

pub type Point = Point3<f64>;

/// A sampled surface: a point cloud with optional annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub id: String,
    pub points: Vec<Point>,
    /// Vertices of interest, used as default propagation queries.
    pub landmarks: Vec<usize>,
    /// Labelled ground-truth landmark vertices.
    pub ground_truth: BTreeMap<String, usize>,
    /// Per-vertex scalar (curvature, conformal factor, ...). Input only.
    pub scalar_field: Option<Vec<f64>>,
    /// Optional triangle list; when present its edges define the intra-shape metric.
    pub faces: Option<Vec<[usize; 3]>>,
}

impl Shape {
    pub fn new(id: impl Into<String>, points: Vec<Point>) -> Self {
        Shape {
            id: id.into(),
            points,
            landmarks: Vec::new(),
            ground_truth: BTreeMap::new(),
            scalar_field: None,
            faces: None,
        }
    }

    pub fn with_landmarks(mut self, landmarks: Vec<usize>) -> Self {
        self.landmarks = landmarks;
        self
    }

    pub fn with_ground_truth(mut self, ground_truth: BTreeMap<String, usize>) -> Self {
        self.ground_truth = ground_truth;
        self
    }

    pub fn with_scalar_field(mut self, field: Vec<f64>) -> Self {
        self.scalar_field = Some(field);
        self
    }

    pub fn with_faces(mut self, faces: Vec<[usize; 3]>) -> Self {
        self.faces = Some(faces);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        let invalid = |reason: String| Error::InvalidShape { id: self.id.clone(), reason };
        if n < 2 {
            return Err(invalid(format!("needs at least 2 points, has {n}")));
        }
        if let Some(p) = self.points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(invalid(format!("point {p} is not finite")));
        }
        for &l in &self.landmarks {
            check_index(&self.id, "landmarks", l, n)?;
        }
        for &v in self.ground_truth.values() {
            check_index(&self.id, "ground truth", v, n)?;
        }
        if let Some(field) = &self.scalar_field {
            if field.len() != n {
                return Err(invalid(format!(
                    "scalar field has {} values for {n} points",
                    field.len()
                )));
            }
        }
        if let Some(faces) = &self.faces {
            for face in faces {
                for &v in face {
                    check_index(&self.id, "faces", v, n)?;
                }
            }
        }
        Ok(())
    }
}

fn check_index(id: &str, what: &str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::IndexOutOfRange { context: format!("{what} of shape {id}"), index, len });
    }
    Ok(())
}
