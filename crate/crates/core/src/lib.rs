//! Open-pose 3D zero-shot classification.
//!
//! A 3D sample is projected into 2D images (`project`), each image is scored
//! against class prompts by an image-text matcher (`matching`), and the
//! projection azimuth is refined per class by sign-gradient ascent on that
//! score starting from the sample's principal-axis frame (`iarm`).
//! `posegen` builds rotated benchmarks and `eval` scores predictions.

pub mod eval;
pub mod geometry;
pub mod iarm;
pub mod io;
pub mod matching;
pub mod pca;
pub mod posegen;
pub mod project;
pub mod toy;

pub use geometry::{
    normalize_to_unit, rotate, GeometryError, PointCloud, RotationQ, Sample, TriMesh, Vec3,
    Vertices,
};
pub use pca::{covariance, eigen_frame, pca_align, CovarianceFrame, PcaAlignment};
