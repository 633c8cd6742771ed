//! Point clouds, triangle meshes and the rigid motions applied to them.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("a sample needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("face {face} references vertex {index} but only {count} vertices exist")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("a mesh needs at least one face")]
    NoFaces,
    #[error("all points coincide; the sample has zero extent")]
    AllPointsCoincident,
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("sample is not centered (centroid norm {0:e})")]
    NotCentered(f64),
}

fn check_points(points: &[Vec3]) -> Result<(), GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints(points.len()));
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(GeometryError::NonFinite(i));
    }
    Ok(())
}

/// An ordered set of 3D sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, GeometryError> {
        check_points(&points)?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        centroid(&self.points)
    }
}

/// Triangle mesh: vertices plus index triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        check_points(&vertices)?;
        if faces.is_empty() {
            return Err(GeometryError::NoFaces);
        }
        for (fi, face) in faces.iter().enumerate() {
            if let Some(&index) = face.iter().find(|&&i| i >= vertices.len()) {
                return Err(GeometryError::FaceIndexOutOfRange {
                    face: fi,
                    index,
                    count: vertices.len(),
                });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// The vertex set viewed as a point cloud.
    pub fn vertex_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.vertices.clone(),
        }
    }
}

/// Shared vertex access so normalization, rotation and alignment work on
/// clouds and meshes alike. Mapping never touches mesh topology.
pub trait Vertices: Sized {
    fn vertices(&self) -> &[Vec3];
    fn map_vertices<F: FnMut(&Vec3) -> Vec3>(&self, f: F) -> Self;
}

impl Vertices for PointCloud {
    fn vertices(&self) -> &[Vec3] {
        &self.points
    }

    fn map_vertices<F: FnMut(&Vec3) -> Vec3>(&self, f: F) -> Self {
        PointCloud {
            points: self.points.iter().map(f).collect(),
        }
    }
}

impl Vertices for TriMesh {
    fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    fn map_vertices<F: FnMut(&Vec3) -> Vec3>(&self, f: F) -> Self {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// A classification input of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Cloud(PointCloud),
    Mesh(TriMesh),
}

impl Sample {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Sample::Cloud(_) => "point cloud",
            Sample::Mesh(_) => "mesh",
        }
    }
}

impl Vertices for Sample {
    fn vertices(&self) -> &[Vec3] {
        match self {
            Sample::Cloud(c) => c.points(),
            Sample::Mesh(m) => m.vertices(),
        }
    }

    fn map_vertices<F: FnMut(&Vec3) -> Vec3>(&self, f: F) -> Self {
        match self {
            Sample::Cloud(c) => Sample::Cloud(c.map_vertices(f)),
            Sample::Mesh(m) => Sample::Mesh(m.map_vertices(f)),
        }
    }
}

impl From<PointCloud> for Sample {
    fn from(c: PointCloud) -> Self {
        Sample::Cloud(c)
    }
}

impl From<TriMesh> for Sample {
    fn from(m: TriMesh) -> Self {
        Sample::Mesh(m)
    }
}

pub(crate) fn centroid(points: &[Vec3]) -> Vec3 {
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    sum / points.len() as f64
}

/// Translate the vertex mean to the origin and scale so the farthest vertex
/// sits on the unit sphere.
pub fn normalize_to_unit<T: Vertices>(x: &T) -> Result<T, GeometryError> {
    let c = centroid(x.vertices());
    let max_norm = x
        .vertices()
        .iter()
        .map(|p| (p - c).norm())
        .fold(0.0_f64, f64::max);
    if !(max_norm > f64::EPSILON * (1.0 + c.norm())) {
        return Err(GeometryError::AllPointsCoincident);
    }
    Ok(x.map_vertices(|p| (p - c) / max_norm))
}

/// Unit quaternion (w, x, y, z) carrying a 3D rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct RotationQ {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

const UNIT_TOLERANCE: f64 = 1e-9;

impl RotationQ {
    pub const IDENTITY: RotationQ = RotationQ {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Checked constructor; the components must already have unit norm.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let q = RotationQ { w, x, y, z };
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::NonUnitQuaternion(n));
        }
        Ok(q)
    }

    pub fn from_axis_angle(axis: &Vec3, angle_rad: f64) -> Self {
        let uq = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle_rad);
        Self::from_unit(&uq)
    }

    pub(crate) fn from_unit(uq: &UnitQuaternion<f64>) -> Self {
        let q = uq.quaternion();
        RotationQ {
            w: q.w,
            x: q.i,
            y: q.j,
            z: q.k,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    fn as_unit(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_unchecked(Quaternion::new(self.w, self.x, self.y, self.z))
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        self.as_unit().to_rotation_matrix().into_inner()
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.as_unit().transform_vector(v)
    }
}

impl From<RotationQ> for [f64; 4] {
    fn from(q: RotationQ) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl TryFrom<[f64; 4]> for RotationQ {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        RotationQ::new(c[0], c[1], c[2], c[3])
    }
}

/// Rigidly rotate every vertex about the origin.
pub fn rotate<T: Vertices>(x: &T, q: &RotationQ) -> Result<T, GeometryError> {
    if !q.is_unit() {
        return Err(GeometryError::NonUnitQuaternion(q.norm()));
    }
    let m = q.to_matrix();
    Ok(x.map_vertices(|p| m * p))
}
