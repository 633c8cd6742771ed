//! Open-pose benchmark generation on small stand-in trees.

use std::fs;
use std::path::Path;

use op3d_core::io::{save_sample, SampleFormat};
use op3d_core::posegen::{
    generate_openpose_dataset, regenerate_sample, sample_rotation, PoseManifest,
};
use op3d_core::{rotate, PointCloud, Sample, Vec3};

fn write_tree(root: &Path, counts: &[(&str, usize)]) {
    for (class_name, n) in counts {
        let dir = root.join(class_name);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..*n {
            let pts = (0..6)
                .map(|k| Vec3::new(k as f64, (i + k * k) as f64 * 0.1, (k % 2) as f64))
                .collect();
            let s = Sample::Cloud(PointCloud::new(pts).unwrap());
            save_sample(
                &dir.join(format!("{class_name}_{i:04}.xyz")),
                &s,
                SampleFormat::Xyz,
            )
            .unwrap();
        }
    }
}

#[test]
fn same_seed_gives_identical_manifests_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    write_tree(&src, &[("a", 3), ("b", 2)]);
    let m1 = generate_openpose_dataset(&src, "stand-in", 7, &dir.path().join("o1")).unwrap();
    let m2 = generate_openpose_dataset(&src, "stand-in", 7, &dir.path().join("o2")).unwrap();
    assert_eq!(m1, m2);
    let read = |d: &str| fs::read(dir.path().join(d).join("manifest.jsonl")).unwrap();
    assert_eq!(read("o1"), read("o2"));
    assert_eq!(
        fs::read(dir.path().join("o1/a/a_0001.xyz")).unwrap(),
        fs::read(dir.path().join("o2/a/a_0001.xyz")).unwrap()
    );
    let m3 = generate_openpose_dataset(&src, "stand-in", 8, &dir.path().join("o3")).unwrap();
    assert_ne!(m1.entries[0].quaternion, m3.entries[0].quaternion);
}

#[test]
fn manifest_round_trips_and_regenerates_samples() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    write_tree(&src, &[("b", 2), ("a", 2)]);
    let out = dir.path().join("out");
    let m = generate_openpose_dataset(&src, "stand-in", 3, &out).unwrap();
    let ids: Vec<_> = m.entries.iter().map(|e| e.sample_id.as_str()).collect();
    assert_eq!(ids, ["a/a_0000", "a/a_0001", "b/b_0000", "b/b_0001"]);
    assert_eq!(PoseManifest::read(&out.join("manifest.jsonl")).unwrap(), m);
    assert_eq!(m.class_histogram().values().sum::<usize>(), 4);
    for (i, e) in m.entries.iter().enumerate() {
        assert_eq!(e.quaternion, sample_rotation(3, i as u64));
        let again = regenerate_sample(&src, e).unwrap();
        let on_disk = op3d_core::io::load_sample(&out.join(&e.file)).unwrap();
        let direct = rotate(
            &op3d_core::io::load_sample(&src.join(&e.file)).unwrap(),
            &e.quaternion,
        )
        .unwrap();
        for ((p, q), r) in again
            .vertices_slice()
            .iter()
            .zip(on_disk.vertices_slice())
            .zip(direct.vertices_slice())
        {
            assert!((p - q).norm() < 1e-6 && (p - r).norm() < 1e-12);
        }
    }
}

trait Verts {
    fn vertices_slice(&self) -> &[Vec3];
}

impl Verts for Sample {
    fn vertices_slice(&self) -> &[Vec3] {
        op3d_core::Vertices::vertices(self)
    }
}

#[test]
fn rotated_axis_is_uniform_over_octants() {
    let n = 10_000;
    let mut octants = [0usize; 8];
    for i in 0..n {
        let v = sample_rotation(42, i).apply(&Vec3::new(1.0, 0.0, 0.0));
        let k = (v.x > 0.0) as usize | ((v.y > 0.0) as usize) << 1 | ((v.z > 0.0) as usize) << 2;
        octants[k] += 1;
    }
    for c in octants {
        let f = c as f64 / n as f64;
        assert!((f - 0.125).abs() < 0.02, "{octants:?}");
    }
}
