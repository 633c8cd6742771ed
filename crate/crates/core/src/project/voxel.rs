//! Point-cloud depth projection: voxelize, densify, smooth, squeeze.
//!
//! The grid lives in camera space with one column per output pixel and
//! [`DEPTH_BINS`] bins along the view axis, stored as one `u128` bitset per
//! column (bit 0 nearest). Dilation is then a handful of shifts and ORs, and
//! the smoothing/squeeze step only touches occupied depths.

use super::camera::{camera_from_angles, CameraConfig, ViewAngles};
use super::image::GrayImage;
use super::ProjectionError;
use crate::geometry::PointCloud;

pub const DEPTH_BINS: usize = 128;
/// 3×3×3 dilation passes applied to the occupancy grid.
pub const DILATION_PASSES: usize = 2;
/// Smoothed-occupancy level a cell needs to survive the squeeze.
pub const SQUEEZE_LEVEL: u32 = 192; // 0.75 of the 256 kernel mass

const BINOMIAL5: [u32; 5] = [1, 4, 6, 4, 1];

/// Occupancy grid with one depth bitset per pixel column.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    size: usize,
    columns: Vec<u128>,
    depth_min: f64,
    depth_max: f64,
}

impl VoxelGrid {
    pub fn resolution(&self) -> (usize, usize, usize) {
        (self.size, self.size, DEPTH_BINS)
    }

    pub fn is_occupied(&self, x: usize, y: usize, bin: usize) -> bool {
        bin < DEPTH_BINS && (self.columns[y * self.size + x] >> bin) & 1 == 1
    }

    pub fn occupied_cells(&self) -> usize {
        self.columns.iter().map(|c| c.count_ones() as usize).sum()
    }

    fn bin_depth(&self, bin: usize) -> f64 {
        let span = self.depth_max - self.depth_min;
        self.depth_min + span * (bin as f64 + 0.5) / DEPTH_BINS as f64
    }
}

/// Bin every in-frustum point into the camera-space grid.
pub fn voxelize(
    x: &PointCloud,
    phi: &ViewAngles,
    cfg: &CameraConfig,
) -> Result<VoxelGrid, ProjectionError> {
    let cam = camera_from_angles(phi, cfg)?;
    let hits: Vec<(usize, usize, f64)> = x
        .points()
        .iter()
        .filter_map(|p| {
            let s = cam.project(p)?;
            let (px, py) = cam.pixel_of(&s)?;
            Some((px, py, s.depth))
        })
        .collect();
    if hits.is_empty() {
        return Err(ProjectionError::EmptyProjection);
    }
    let depth_min = hits.iter().map(|h| h.2).fold(f64::INFINITY, f64::min);
    let depth_max = hits.iter().map(|h| h.2).fold(f64::NEG_INFINITY, f64::max);
    let span = depth_max - depth_min;
    let size = cfg.image_px;
    let mut columns = vec![0u128; size * size];
    for (px, py, d) in hits {
        let bin = if span > 1e-12 {
            (((d - depth_min) / span) * DEPTH_BINS as f64).floor() as usize
        } else {
            0
        };
        columns[py * size + px] |= 1u128 << bin.min(DEPTH_BINS - 1);
    }
    Ok(VoxelGrid {
        size,
        columns,
        depth_min,
        depth_max,
    })
}

/// One pass of 3×3×3 binary dilation.
pub fn densify(grid: &VoxelGrid) -> VoxelGrid {
    let n = grid.size;
    let spread: Vec<u128> = grid
        .columns
        .iter()
        .map(|&c| c | (c << 1) | (c >> 1))
        .collect();
    let mut out = vec![0u128; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut acc = 0u128;
            for yy in y.saturating_sub(1)..=(y + 1).min(n - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(n - 1) {
                    acc |= spread[yy * n + xx];
                }
            }
            out[y * n + x] = acc;
        }
    }
    VoxelGrid {
        columns: out,
        ..grid.clone()
    }
}

/// Blur every depth slice with a 5×5 binomial kernel and squeeze each pixel
/// column to its nearest cell whose smoothed occupancy reaches
/// [`SQUEEZE_LEVEL`]. Returns the nearest bin per pixel.
pub fn smooth_and_squeeze(grid: &VoxelGrid) -> Vec<Option<usize>> {
    let n = grid.size as isize;
    let mut out = vec![None; grid.columns.len()];
    for y in 0..n {
        for x in 0..n {
            let mut candidates = 0u128;
            for dy in -2..=2isize {
                for dx in -2..=2isize {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx >= 0 && yy >= 0 && xx < n && yy < n {
                        candidates |= grid.columns[(yy * n + xx) as usize];
                    }
                }
            }
            while candidates != 0 {
                let bin = candidates.trailing_zeros() as usize;
                candidates &= candidates - 1;
                let mut mass = 0u32;
                for (ky, dy) in (-2..=2isize).enumerate() {
                    for (kx, dx) in (-2..=2isize).enumerate() {
                        let (xx, yy) = (x + dx, y + dy);
                        if xx >= 0
                            && yy >= 0
                            && xx < n
                            && yy < n
                            && (grid.columns[(yy * n + xx) as usize] >> bin) & 1 == 1
                        {
                            mass += BINOMIAL5[kx] * BINOMIAL5[ky];
                        }
                    }
                }
                if mass >= SQUEEZE_LEVEL {
                    out[(y * n + x) as usize] = Some(bin);
                    break;
                }
            }
        }
    }
    out
}

/// Depth image of a point cloud; nearer is brighter, background 0.
pub fn project_pointcloud_depth(
    x: &PointCloud,
    phi: &ViewAngles,
    cfg: &CameraConfig,
) -> Result<GrayImage, ProjectionError> {
    let mut grid = voxelize(x, phi, cfg)?;
    for _ in 0..DILATION_PASSES {
        grid = densify(&grid);
    }
    let nearest = smooth_and_squeeze(&grid);
    let depths: Vec<Option<f64>> = nearest
        .iter()
        .map(|b| b.map(|b| grid.bin_depth(b)))
        .collect();
    Ok(encode_depth(cfg.image_px, &depths))
}

/// Per-image depth normalization: `1 - (d - d_min) / (d_max - d_min)` on
/// covered pixels, 0 elsewhere. A flat image encodes as 1.
pub(crate) fn encode_depth(size: usize, depths: &[Option<f64>]) -> GrayImage {
    let covered = depths.iter().flatten();
    let d_min = covered.clone().copied().fold(f64::INFINITY, f64::min);
    let d_max = covered.copied().fold(f64::NEG_INFINITY, f64::max);
    let span = d_max - d_min;
    let pixels = depths
        .iter()
        .map(|d| match d {
            None => 0.0,
            Some(_) if span <= 1e-12 => 1.0,
            Some(d) => (1.0 - (d - d_min) / span) as f32,
        })
        .collect();
    GrayImage::from_pixels(size, size, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cfg() -> CameraConfig {
        CameraConfig::default()
    }

    #[test]
    fn single_point_blob_is_centered() {
        let c = PointCloud::new(vec![Vec3::zeros(); 3]).unwrap();
        let img =
            project_pointcloud_depth(&c, &ViewAngles::new(20.0, 10.0).unwrap(), &cfg()).unwrap();
        let (x0, y0, x1, y1) = img.bounding_box(0.0).unwrap();
        assert_eq!((x1 - x0, y1 - y0), (2, 2));
        let (cx, cy) = ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0);
        assert!((cx - 112.0).abs() <= 1.0 && (cy - 112.0).abs() <= 1.0);
        let peak = img.pixels().iter().copied().fold(0.0f32, f32::max);
        assert_eq!(img.get(112, 112), peak);
    }

    #[test]
    fn dilation_grows_one_cell_per_pass() {
        let c = PointCloud::new(vec![Vec3::zeros(); 3]).unwrap();
        let g = voxelize(&c, &ViewAngles::TOP, &cfg()).unwrap();
        assert_eq!(g.occupied_cells(), 1);
        let g1 = densify(&g);
        assert_eq!(g1.occupied_cells(), 3 * 3 * 2); // bin 0 cannot grow nearer
        let g2 = densify(&g1);
        assert_eq!(g2.occupied_cells(), 5 * 5 * 3);
    }

    #[test]
    fn points_behind_camera_are_empty() {
        let c = PointCloud::new(vec![
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(6.0, 0.1, 0.0),
            Vec3::new(7.0, 0.0, 0.2),
        ])
        .unwrap();
        let phi = ViewAngles::new(0.0, 0.0).unwrap();
        assert!(matches!(
            project_pointcloud_depth(&c, &phi, &cfg()),
            Err(ProjectionError::EmptyProjection)
        ));
    }

    #[test]
    fn nearer_points_are_brighter() {
        // two separated points, one closer to a camera on +x
        let c = PointCloud::new(vec![
            Vec3::new(0.5, 0.4, 0.0),
            Vec3::new(-0.5, -0.4, 0.0),
            Vec3::new(-0.5, -0.4, 0.0),
        ])
        .unwrap();
        let img =
            project_pointcloud_depth(&c, &ViewAngles::new(0.0, 0.0).unwrap(), &cfg()).unwrap();
        let cam = camera_from_angles(&ViewAngles::new(0.0, 0.0).unwrap(), &cfg()).unwrap();
        let near = cam.project(&c.points()[0]).unwrap();
        let far = cam.project(&c.points()[1]).unwrap();
        assert_eq!(img.get(near.x as usize, near.y as usize), 1.0);
        assert!(img.get(far.x as usize, far.y as usize) < 0.05);
    }
}
