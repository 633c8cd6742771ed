//! A small synthetic benchmark: three mesh shapes in upright canonical
//! poses, used for end-to-end runs without any pretrained model.

use std::fs;
use std::path::Path;

use crate::geometry::{Sample, TriMesh, Vec3};
use crate::io::{save_sample, SampleFormat};
use crate::matching::{MatchError, TemplateBank};
use crate::posegen::{generate_openpose_dataset, PoseManifest, PosegenError};
use crate::project::{CameraConfig, ProjectionStyle};

pub const TOY_CLASSES: [&str; 3] = ["cube", "pyramid", "rod"];

/// Axis-aligned box centred at the origin.
pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> TriMesh {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let v = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    #[rustfmt::skip]
    let faces = vec![
        [0, 2, 1], [1, 2, 3], // z-
        [4, 5, 6], [5, 7, 6], // z+
        [0, 1, 4], [1, 5, 4], // y-
        [2, 6, 3], [3, 6, 7], // y+
        [0, 4, 2], [2, 4, 6], // x-
        [1, 3, 5], [3, 7, 5], // x+
    ];
    TriMesh::new(v, faces).expect("box is well formed")
}

/// Square-based pyramid with its apex on +z.
pub fn pyramid_mesh(base: f64, height: f64) -> TriMesh {
    let h = base / 2.0;
    let v = vec![
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
        Vec3::new(0.0, 0.0, height),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2],
        [0, 1, 4],
        [1, 2, 4],
        [2, 3, 4],
        [3, 0, 4],
    ];
    TriMesh::new(v, faces).expect("pyramid is well formed")
}

/// Canonical sample of a toy class.
pub fn toy_shape(class_name: &str) -> Option<Sample> {
    let mesh = match class_name {
        "cube" => box_mesh(1.0, 1.0, 1.0),
        "pyramid" => pyramid_mesh(1.0, 1.2),
        "rod" => box_mesh(0.2, 0.2, 1.6),
        _ => return None,
    };
    Some(Sample::Mesh(mesh))
}

pub fn toy_canonical() -> Vec<(String, Sample)> {
    TOY_CLASSES
        .iter()
        .map(|c| (c.to_string(), toy_shape(c).expect("known class")))
        .collect()
}

/// Template bank built from the canonical toy shapes.
pub fn toy_bank(
    styles: &[ProjectionStyle],
    camera: &CameraConfig,
) -> Result<TemplateBank, MatchError> {
    TemplateBank::build(&toy_canonical(), styles, camera)
}

/// Write `per_class` canonical copies of every toy class under
/// `dir/<class>/`.
pub fn write_toy_source(dir: &Path, per_class: usize) -> Result<(), PosegenError> {
    for (class_name, sample) in toy_canonical() {
        let class_dir = dir.join(&class_name);
        fs::create_dir_all(&class_dir).map_err(|source| PosegenError::Io {
            path: class_dir.display().to_string(),
            source,
        })?;
        for i in 0..per_class {
            let path = class_dir.join(format!("{class_name}_{i:03}.off"));
            save_sample(&path, &sample, SampleFormat::Off).map_err(|source| {
                PosegenError::UnreadableSample {
                    path: path.display().to_string(),
                    source,
                }
            })?;
        }
    }
    Ok(())
}

/// Source tree under `root/source`, seeded open-pose copy under
/// `root/openpose`.
pub fn generate_toy_benchmark(
    root: &Path,
    per_class: usize,
    seed: u64,
) -> Result<PoseManifest, PosegenError> {
    let source = root.join("source");
    write_toy_source(&source, per_class)?;
    generate_openpose_dataset(&source, "toy", seed, &root.join("openpose"))
}
