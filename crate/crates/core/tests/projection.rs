//! Projection geometry checks against analytic pinhole values.

use op3d_core::geometry::{rotate, RotationQ, Sample, TriMesh, Vec3};
use op3d_core::project::{
    camera_from_angles, canny_edges, mask_iou, project, render_mesh, CameraConfig, GrayImage,
    ProjectionStyle, ViewAngles, CLOUD_THRESHOLDS,
};
use op3d_core::toy::{box_mesh, pyramid_mesh};

fn angles(phi1: f64, phi2: f64) -> ViewAngles {
    ViewAngles::new(phi1, phi2).unwrap()
}

/// An asymmetric mesh: a pyramid with an off-centre bar attached.
fn asymmetric() -> TriMesh {
    let p = pyramid_mesh(0.8, 0.9);
    let b = box_mesh(0.9, 0.15, 0.15);
    let mut v = p.vertices().to_vec();
    let off = v.len();
    v.extend(b.vertices().iter().map(|q| q + Vec3::new(0.35, 0.3, 0.1)));
    let mut f = p.faces().to_vec();
    f.extend(b.faces().iter().map(|t| t.map(|i| i + off)));
    TriMesh::new(v, f).unwrap()
}

#[test]
fn canny_traces_a_square_outline() {
    let mut img = GrayImage::new(224, 224);
    for y in 62..162 {
        for x in 62..162 {
            img.set(x, y, 1.0);
        }
    }
    let e = canny_edges(&img, CLOUD_THRESHOLDS.0, CLOUD_THRESHOLDS.1);
    let near_boundary = |x: usize, y: usize| {
        let dx = (x as i64 - 62).abs().min((x as i64 - 161).abs());
        let dy = (y as i64 - 62).abs().min((y as i64 - 161).abs());
        let inside_x = (60..=163).contains(&x);
        let inside_y = (60..=163).contains(&y);
        (dx <= 1 && inside_y) || (dy <= 1 && inside_x)
    };
    let mut on = 0;
    for y in 0..224 {
        for x in 0..224 {
            if e.get(x, y) > 0.0 {
                assert!(near_boundary(x, y), "stray edge at ({x}, {y})");
                on += 1;
            }
        }
    }
    // Each side contributes about 100 pixels.
    assert!((380..=420).contains(&on), "{on} edge pixels");
    for t in [70, 112, 150] {
        assert!((60..=64).any(|x| e.get(x, t) > 0.0), "left side gap at {t}");
        assert!(
            (159..=163).any(|x| e.get(x, t) > 0.0),
            "right side gap at {t}"
        );
        assert!((60..=64).any(|y| e.get(t, y) > 0.0), "top side gap at {t}");
        assert!(
            (159..=163).any(|y| e.get(t, y) > 0.0),
            "bottom side gap at {t}"
        );
    }
}

#[test]
fn unit_cube_bounding_box_matches_pinhole_corners() {
    let cfg = CameraConfig::default();
    let cube = box_mesh(1.0, 1.0, 1.0);
    for (phi1, phi2) in [
        (0.0, 0.0),
        (30.0, 45.0),
        (-20.0, 200.0),
        (60.0, 310.0),
        (90.0, 0.0),
    ] {
        let phi = angles(phi1, phi2);
        let cam = camera_from_angles(&phi, &cfg).unwrap();
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for c in cube.vertices() {
            let s = cam.project(c).unwrap();
            x0 = x0.min(s.x);
            y0 = y0.min(s.y);
            x1 = x1.max(s.x);
            y1 = y1.max(s.y);
        }
        let img = render_mesh(&cube, &phi, &cfg).unwrap();
        let (bx0, by0, bx1, by1) = img.bounding_box(0.0).unwrap();
        // Pixel i spans [i, i + 1).
        let got = [bx0 as f64, by0 as f64, bx1 as f64 + 1.0, by1 as f64 + 1.0];
        for (g, want) in got.iter().zip([x0, y0, x1, y1]) {
            assert!(
                (g - want).abs() <= 2.0,
                "({phi1}, {phi2}): {got:?} vs {:?}",
                [x0, y0, x1, y1]
            );
        }
    }
}

#[test]
fn azimuth_is_periodic() {
    let cfg = CameraConfig::default();
    let m = Sample::Mesh(asymmetric());
    for style in [
        ProjectionStyle::Render,
        ProjectionStyle::Depth,
        ProjectionStyle::Edge,
    ] {
        let a = project(&m, &angles(25.0, 40.0), style, &cfg).unwrap();
        let b = project(&m, &angles(25.0, 400.0), style, &cfg).unwrap();
        let c = project(&m, &angles(25.0, -320.0), style, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}

#[test]
fn rotating_the_object_equals_moving_the_camera() {
    let cfg = CameraConfig::default();
    let m = asymmetric();
    for (phi1, phi2, turn) in [(0.0, 0.0, 30.0), (35.0, 120.0, 75.0), (-50.0, 300.0, 200.0)] {
        let q = RotationQ::from_axis_angle(&Vec3::z(), f64::to_radians(turn));
        let turned = rotate(&m, &q).unwrap();
        let a = render_mesh(&turned, &angles(phi1, phi2 + turn), &cfg).unwrap();
        let b = render_mesh(&m, &angles(phi1, phi2), &cfg).unwrap();
        let iou = mask_iou(&a.mask(0.0), &b.mask(0.0));
        assert!(iou >= 0.98, "({phi1}, {phi2}, {turn}): IoU {iou}");
    }
}

#[test]
fn top_view_azimuth_rotates_the_image() {
    let cfg = CameraConfig::default();
    let m = asymmetric();
    let base = render_mesh(&m, &angles(90.0, 0.0), &cfg).unwrap();
    for a in [30.0, 90.0, 145.0] {
        let img = render_mesh(&m, &angles(90.0, a), &cfg).unwrap();
        let iou = mask_iou(&img.mask(0.0), &base.rotated(-a).mask(0.0));
        assert!(iou >= 0.95, "azimuth {a}: IoU {iou}");
    }
}
