//! Depth-buffered triangle rasterization with flat Lambert shading.

use super::camera::{camera_from_angles, Camera, CameraConfig, ScreenPoint, ViewAngles};
use super::image::GrayImage;
use super::voxel::encode_depth;
use super::ProjectionError;
use crate::geometry::{TriMesh, Vec3};

/// Per-pixel nearest depth and the shade of the triangle that produced it.
pub struct Framebuffer {
    pub size: usize,
    pub depth: Vec<f64>,
    pub shade: Vec<f32>,
}

impl Framebuffer {
    fn new(size: usize) -> Self {
        Self {
            size,
            depth: vec![f64::INFINITY; size * size],
            shade: vec![0.0; size * size],
        }
    }

    pub fn covered(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

#[inline]
fn edge(a: &ScreenPoint, b: &ScreenPoint, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Two-sided Lambert term for a distant light along the camera direction:
/// the face normal is turned toward the viewer before clamping.
pub fn lambert_shade(cam: &Camera, v: [&Vec3; 3]) -> f32 {
    let n = (v[1] - v[0]).cross(&(v[2] - v[0]));
    let len = n.norm();
    if len <= 0.0 {
        return 0.0;
    }
    let mut n = n / len;
    let center = (v[0] + v[1] + v[2]) / 3.0;
    if n.dot(&(cam.position - center)) < 0.0 {
        n = -n;
    }
    n.dot(&cam.light_direction()).max(0.0) as f32
}

/// Rasterize `mesh` into a depth/shade buffer. Pixels are sampled at their
/// centers; depth uses perspective-correct interpolation of 1/z.
pub fn rasterize(mesh: &TriMesh, cam: &Camera) -> Framebuffer {
    let n = cam.size();
    let mut fb = Framebuffer::new(n);
    let verts: Vec<Option<ScreenPoint>> = mesh.vertices().iter().map(|v| cam.project(v)).collect();
    for f in mesh.faces() {
        let (Some(a), Some(b), Some(c)) = (verts[f[0]], verts[f[1]], verts[f[2]]) else {
            continue;
        };
        let area = edge(&a, &b, c.x, c.y);
        if area.abs() < 1e-12 {
            continue;
        }
        let shade = lambert_shade(
            cam,
            [
                &mesh.vertices()[f[0]],
                &mesh.vertices()[f[1]],
                &mesh.vertices()[f[2]],
            ],
        );
        let x0 = a.x.min(b.x).min(c.x).floor().max(0.0) as usize;
        let y0 = a.y.min(b.y).min(c.y).floor().max(0.0) as usize;
        let x1 = (a.x.max(b.x).max(c.x).ceil().max(0.0) as usize).min(n);
        let y1 = (a.y.max(b.y).max(c.y).ceil().max(0.0) as usize).min(n);
        let (iza, izb, izc) = (1.0 / a.depth, 1.0 / b.depth, 1.0 / c.depth);
        for py in y0..y1 {
            for px in x0..x1 {
                let (sx, sy) = (px as f64 + 0.5, py as f64 + 0.5);
                let w0 = edge(&b, &c, sx, sy) / area;
                let w1 = edge(&c, &a, sx, sy) / area;
                let w2 = edge(&a, &b, sx, sy) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let depth = 1.0 / (w0 * iza + w1 * izb + w2 * izc);
                let i = py * n + px;
                if depth < fb.depth[i] {
                    fb.depth[i] = depth;
                    fb.shade[i] = shade;
                }
            }
        }
    }
    fb
}

fn rasterize_at(
    mesh: &TriMesh,
    phi: &ViewAngles,
    cfg: &CameraConfig,
) -> Result<Framebuffer, ProjectionError> {
    let cam = camera_from_angles(phi, cfg)?;
    let fb = rasterize(mesh, &cam);
    if fb.covered() == 0 {
        return Err(ProjectionError::EmptyProjection);
    }
    Ok(fb)
}

/// Shaded rendering lit by a distant light co-located with the camera.
pub fn render_mesh(
    mesh: &TriMesh,
    phi: &ViewAngles,
    cfg: &CameraConfig,
) -> Result<GrayImage, ProjectionError> {
    let fb = rasterize_at(mesh, phi, cfg)?;
    Ok(GrayImage::from_pixels(fb.size, fb.size, fb.shade))
}

/// Depth image of a mesh from its z-buffer, encoded like point-cloud depth.
pub fn mesh_depth(
    mesh: &TriMesh,
    phi: &ViewAngles,
    cfg: &CameraConfig,
) -> Result<GrayImage, ProjectionError> {
    let fb = rasterize_at(mesh, phi, cfg)?;
    let depths: Vec<Option<f64>> = fb
        .depth
        .iter()
        .map(|&d| d.is_finite().then_some(d))
        .collect();
    Ok(encode_depth(fb.size, &depths))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(v: [[f64; 3]; 3]) -> TriMesh {
        TriMesh::new(
            v.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn facing_triangle_has_analytic_lambert_value() {
        // triangle in the plane x = 0.1 tilted about z by 30°, camera on +x
        let t = 30f64.to_radians();
        let normal = Vec3::new(t.cos(), t.sin(), 0.0);
        let u = Vec3::new(-t.sin(), t.cos(), 0.0);
        let w = Vec3::z();
        let verts = [-0.5 * u - 0.5 * w, 0.5 * u - 0.5 * w, 0.5 * w];
        let m = TriMesh::new(verts.to_vec(), vec![[0, 1, 2]]).unwrap();
        let img = render_mesh(
            &m,
            &ViewAngles::new(0.0, 0.0).unwrap(),
            &CameraConfig::default(),
        )
        .unwrap();
        let expected = normal.dot(&Vec3::x()) as f32; // cos 30°
        let covered: Vec<f32> = img.pixels().iter().copied().filter(|&v| v > 0.0).collect();
        assert!(covered.len() > 500);
        assert!(covered.iter().all(|&v| (v - expected).abs() < 1e-6));
    }

    #[test]
    fn edge_on_triangle_covers_almost_nothing() {
        // plane z = const seen from the equator
        let m = tri([[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.0, 0.5, 0.0]]);
        let res = render_mesh(
            &m,
            &ViewAngles::new(0.0, 0.0).unwrap(),
            &CameraConfig::default(),
        );
        match res {
            Err(ProjectionError::EmptyProjection) => {}
            Ok(img) => assert!(img.count_above(0.0) < 224 * 224 / 100),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn nearer_triangle_wins() {
        let near = [[0.3, -0.5, -0.5], [0.3, 0.5, -0.5], [0.3, 0.0, 0.5]];
        // tilted so its shade differs from the facing one
        let far = [[-0.3, -0.6, -0.6], [-0.1, 0.6, -0.6], [-0.2, 0.0, 0.6]];
        let mut verts: Vec<Vec3> = near.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
        verts.extend(far.iter().map(|p| Vec3::new(p[0], p[1], p[2])));
        for faces in [vec![[0, 1, 2], [3, 4, 5]], vec![[3, 4, 5], [0, 1, 2]]] {
            let m = TriMesh::new(verts.clone(), faces).unwrap();
            let cfg = CameraConfig::default();
            let img = render_mesh(&m, &ViewAngles::new(0.0, 0.0).unwrap(), &cfg).unwrap();
            // the image center is covered by both; the facing triangle shades to 1
            assert!((img.get(112, 112) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mesh_depth_is_brighter_in_front() {
        let m = tri([[0.5, 0.0, -0.5], [-0.5, 0.0, -0.5], [0.0, 0.0, 0.5]]);
        // camera on +y sees the triangle face-on; tilt the camera so depth varies
        let img = mesh_depth(
            &m,
            &ViewAngles::new(30.0, 90.0).unwrap(),
            &CameraConfig::default(),
        )
        .unwrap();
        let bb = img.bounding_box(0.0).unwrap();
        // the top vertex (z = 0.5) is nearer to an elevated camera than the base
        let top_row = bb.1;
        let row_max = |y: usize| (0..224).map(|x| img.get(x, y)).fold(0.0f32, f32::max);
        assert!(row_max(top_row) > row_max(bb.3 - 1));
    }
}
