//! Projection of 3D samples into 2D images in several styles.

mod camera;
mod canny;
mod image;
mod raster;
mod voxel;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{camera_from_angles, Camera, CameraConfig, ScreenPoint, ViewAngles};
pub use canny::{canny_edges, CLOUD_THRESHOLDS, GAUSSIAN_SIGMA, MESH_THRESHOLDS};
pub use image::{mask_iou, GrayImage};
pub use raster::{lambert_shade, mesh_depth, rasterize, render_mesh, Framebuffer};
pub use voxel::{
    densify, project_pointcloud_depth, smooth_and_squeeze, voxelize, VoxelGrid, DEPTH_BINS,
    DILATION_PASSES, SQUEEZE_LEVEL,
};

use crate::geometry::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("style {style} is not available for {kind} input")]
    StyleUnsupportedForInput {
        style: ProjectionStyle,
        kind: &'static str,
    },
    #[error("no geometry falls inside the view frustum")]
    EmptyProjection,
    #[error("invalid view angles ({phi1}, {phi2})")]
    InvalidAngles { phi1: f64, phi2: f64 },
    #[error("invalid camera configuration {0:?}")]
    InvalidCamera(CameraConfig),
    #[error("a view set needs at least one view")]
    NoViews,
    #[error("image: {0}")]
    Image(String),
}

/// Rendering modality of a projected image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionStyle {
    Render,
    Depth,
    Edge,
}

impl ProjectionStyle {
    pub const ALL: [ProjectionStyle; 3] = [
        ProjectionStyle::Render,
        ProjectionStyle::Depth,
        ProjectionStyle::Edge,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProjectionStyle::Render => "render",
            ProjectionStyle::Depth => "depth",
            ProjectionStyle::Edge => "edge",
        }
    }
}

impl fmt::Display for ProjectionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProjectionStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "render" => Ok(ProjectionStyle::Render),
            "depth" => Ok(ProjectionStyle::Depth),
            "edge" => Ok(ProjectionStyle::Edge),
            other => Err(format!("unknown projection style `{other}`")),
        }
    }
}

/// Project `x` at `phi` in the requested style. Edge images are Canny maps
/// of the render (meshes) or the depth image (point clouds), with the
/// stricter mesh thresholds for renders.
pub fn project(
    x: &Sample,
    phi: &ViewAngles,
    style: ProjectionStyle,
    cfg: &CameraConfig,
) -> Result<GrayImage, ProjectionError> {
    match (x, style) {
        (Sample::Cloud(c), ProjectionStyle::Depth) => project_pointcloud_depth(c, phi, cfg),
        (Sample::Cloud(c), ProjectionStyle::Edge) => {
            let base = project_pointcloud_depth(c, phi, cfg)?;
            Ok(canny_edges(&base, CLOUD_THRESHOLDS.0, CLOUD_THRESHOLDS.1))
        }
        (Sample::Cloud(_), ProjectionStyle::Render) => {
            Err(ProjectionError::StyleUnsupportedForInput {
                style,
                kind: x.kind_name(),
            })
        }
        (Sample::Mesh(m), ProjectionStyle::Render) => render_mesh(m, phi, cfg),
        (Sample::Mesh(m), ProjectionStyle::Depth) => mesh_depth(m, phi, cfg),
        (Sample::Mesh(m), ProjectionStyle::Edge) => {
            let base = render_mesh(m, phi, cfg)?;
            Ok(canny_edges(&base, MESH_THRESHOLDS.0, MESH_THRESHOLDS.1))
        }
    }
}

/// Fixed multi-view camera placements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViewSet {
    /// The top view only.
    Single,
    /// The six coordinate-axis directions.
    Cube,
    /// `n_views` azimuths evenly spaced at elevation `phi1`.
    Circular { n_views: usize, phi1: f64 },
}

pub fn fixed_view_sets(kind: &ViewSet) -> Result<Vec<ViewAngles>, ProjectionError> {
    match *kind {
        ViewSet::Single => Ok(vec![ViewAngles::TOP]),
        ViewSet::Cube => [
            (90.0, 0.0),
            (-90.0, 0.0),
            (0.0, 0.0),
            (0.0, 90.0),
            (0.0, 180.0),
            (0.0, 270.0),
        ]
        .iter()
        .map(|&(a, b)| ViewAngles::new(a, b))
        .collect(),
        ViewSet::Circular { n_views, phi1 } => {
            if n_views < 1 {
                return Err(ProjectionError::NoViews);
            }
            (0..n_views)
                .map(|i| ViewAngles::new(phi1, 360.0 * i as f64 / n_views as f64))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PointCloud, TriMesh, Vec3};

    fn cloud() -> Sample {
        let pts = (0..50)
            .map(|i| {
                let t = i as f64 * 0.37;
                Vec3::new(t.sin() * 0.8, (t * 1.3).cos() * 0.5, (t * 0.7).sin() * 0.3)
            })
            .collect();
        Sample::Cloud(PointCloud::new(pts).unwrap())
    }

    fn mesh() -> Sample {
        let v = vec![
            Vec3::new(-0.5, -0.5, 0.0),
            Vec3::new(0.5, -0.5, 0.0),
            Vec3::new(0.0, 0.5, 0.0),
            Vec3::new(0.0, 0.0, 0.6),
        ];
        Sample::Mesh(TriMesh::new(v, vec![[0, 1, 2], [0, 1, 3], [1, 2, 3], [2, 0, 3]]).unwrap())
    }

    #[test]
    fn dispatch_rules() {
        let cfg = CameraConfig::default();
        let phi = ViewAngles::new(30.0, 20.0).unwrap();
        assert!(matches!(
            project(&cloud(), &phi, ProjectionStyle::Render, &cfg),
            Err(ProjectionError::StyleUnsupportedForInput { .. })
        ));
        let Sample::Cloud(c) = cloud() else {
            unreachable!()
        };
        assert_eq!(
            project(&cloud(), &phi, ProjectionStyle::Depth, &cfg).unwrap(),
            project_pointcloud_depth(&c, &phi, &cfg).unwrap()
        );
        let Sample::Mesh(m) = mesh() else {
            unreachable!()
        };
        let render = render_mesh(&m, &phi, &cfg).unwrap();
        assert_eq!(
            project(&mesh(), &phi, ProjectionStyle::Edge, &cfg).unwrap(),
            canny_edges(&render, MESH_THRESHOLDS.0, MESH_THRESHOLDS.1)
        );
        for style in ProjectionStyle::ALL {
            let img = project(&mesh(), &phi, style, &cfg).unwrap();
            assert_eq!((img.width(), img.height()), (224, 224));
            assert!(img.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn view_sets() {
        let cube = fixed_view_sets(&ViewSet::Cube).unwrap();
        assert_eq!(cube.len(), 6);
        assert_eq!(cube[0], ViewAngles::TOP);
        assert_eq!(cube[1].phi1, -90.0);
        let az: Vec<f64> = cube[2..].iter().map(|v| v.phi2).collect();
        assert_eq!(az, vec![0.0, 90.0, 180.0, 270.0]);

        let circ = fixed_view_sets(&ViewSet::Circular {
            n_views: 4,
            phi1: 30.0,
        })
        .unwrap();
        assert!(circ.iter().all(|v| v.phi1 == 30.0));
        let az: Vec<f64> = circ.iter().map(|v| v.phi2).collect();
        assert_eq!(az, vec![0.0, 90.0, 180.0, 270.0]);

        assert_eq!(
            fixed_view_sets(&ViewSet::Single).unwrap(),
            vec![ViewAngles::new(90.0, 0.0).unwrap()]
        );
        assert_eq!(
            fixed_view_sets(&ViewSet::Circular {
                n_views: 0,
                phi1: 30.0
            }),
            Err(ProjectionError::NoViews)
        );
    }

    #[test]
    fn style_names_round_trip() {
        for s in ProjectionStyle::ALL {
            assert_eq!(s.as_str().parse::<ProjectionStyle>().unwrap(), s);
        }
        assert!("photo".parse::<ProjectionStyle>().is_err());
    }
}
